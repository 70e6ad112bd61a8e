"""Adaptive Dormand-Prince 5(4) engine and the flows built on it.

The stepping loop is compiled with numba and dispatches to the vector
fields of :mod:`phaselock.fields` by integer code, each taking a float64
parameter vector ``args``.  Complex 2x2 linear systems are carried as real vectors (real
parts first, imaginary parts second).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import fields
from .fields import evaluate
from .params import ReducedParams


class IntegrationBudgetError(RuntimeError):
    """The integrator ran out of function evaluations or the step collapsed."""


@dataclass(frozen=True)
class OdeSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    max_evals: int = 2_000_000

    def __post_init__(self) -> None:
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not (0.0 < v <= 1e-2):
                raise ValueError(f"{name} must lie in (0, 1e-2], got {v}")
        if self.max_evals <= 0:
            raise ValueError("max_evals must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def tightened(self, factor: float) -> OdeSettings:
        return OdeSettings(self.rel_tol * factor, self.abs_tol * factor, self.max_step, self.max_evals * 4)


DEFAULT_SETTINGS = OdeSettings()

# Dormand-Prince tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
_A71, _A73, _A74, _A75, _A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0,
)
# continuous extension coefficients
_D1, _D3, _D4 = -12715105075.0 / 11282082432.0, 87487479700.0 / 32700410799.0, -10690763975.0 / 1880347072.0
_D5, _D6, _D7 = 701980252875.0 / 199316789632.0, -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0

STATUS_OK = 0
STATUS_BUDGET = 1
STATUS_STEP_UNDERFLOW = 2


@njit(cache=True)
def _err_norm(y, ynew, err, rtol, atol):
    s = 0.0
    n = y.shape[0]
    for i in range(n):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        s += (err[i] / sc) ** 2
    return math.sqrt(s / n)


@njit(cache=True)
def _initial_step(field, t0, y0, f0, args, direction, rtol, atol, hmax):
    n = y0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, hmax)
    y1 = y0 + direction * h0 * f0
    f1 = evaluate(field, t0 + direction * h0, y1, args)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, hmax)


@njit(cache=True)
def _dopri(field, t0, t1, y0, args, rtol, atol, hmax, max_evals, record):
    """Integrate from t0 to t1.

    Returns (y_end, status, nfev, nsteps, t_starts, h_signed, cont) where the
    last three hold dense-output data when ``record`` is true.
    """
    n = y0.shape[0]
    y = y0.copy()
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    cap = 64 if record else 1
    t_starts = np.empty(cap)
    h_signed = np.empty(cap)
    cont = np.empty((cap, 5, n))
    nsteps = 0
    if span == 0.0:
        return y, STATUS_OK, 0, nsteps, t_starts[:0], h_signed[:0], cont[:0]
    hmax = min(hmax, span)
    k1 = evaluate(field, t0, y, args)
    nfev = 1
    h = _initial_step(field, t0, y, k1, args, direction, rtol, atol, hmax)
    nfev += 1
    t = t0
    beta = 0.04
    expo1 = 0.2 - beta * 0.75
    facold = 1e-4
    safe = 0.9
    reject = False
    while True:
        remaining = (t1 - t) * direction
        if remaining <= 1e-15 * max(1.0, abs(t1)):
            break
        if h >= remaining:
            h = remaining
        if h < 1e-14 * max(1.0, abs(t)):
            return y, STATUS_STEP_UNDERFLOW, nfev, nsteps, t_starts[:nsteps], h_signed[:nsteps], cont[:nsteps]
        if nfev > max_evals:
            return y, STATUS_BUDGET, nfev, nsteps, t_starts[:nsteps], h_signed[:nsteps], cont[:nsteps]
        hs = direction * h
        k2 = evaluate(field, t + _C2 * hs, y + hs * (_A21 * k1), args)
        k3 = evaluate(field, t + _C3 * hs, y + hs * (_A31 * k1 + _A32 * k2), args)
        k4 = evaluate(field, t + _C4 * hs, y + hs * (_A41 * k1 + _A42 * k2 + _A43 * k3), args)
        k5 = evaluate(field, t + _C5 * hs, y + hs * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4), args)
        k6 = evaluate(field, t + hs, y + hs * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5), args)
        ynew = y + hs * (_A71 * k1 + _A73 * k3 + _A74 * k4 + _A75 * k5 + _A76 * k6)
        k7 = evaluate(field, t + hs, ynew, args)
        nfev += 6
        err = hs * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        en = _err_norm(y, ynew, err, rtol, atol)
        if not math.isfinite(en):
            h *= 0.1
            reject = True
            continue
        fac11 = en ** expo1 if en > 0.0 else 0.0
        fac = fac11 / (facold ** beta)
        fac = max(0.1, min(5.0, fac / safe))
        if en <= 1.0:
            facold = max(en, 1e-4)
            if record:
                if nsteps == t_starts.shape[0]:
                    newcap = 2 * nsteps
                    ts2 = np.empty(newcap)
                    hs2 = np.empty(newcap)
                    c2 = np.empty((newcap, 5, n))
                    ts2[:nsteps] = t_starts[:nsteps]
                    hs2[:nsteps] = h_signed[:nsteps]
                    c2[:nsteps] = cont[:nsteps]
                    t_starts = ts2
                    h_signed = hs2
                    cont = c2
                ydiff = ynew - y
                bspl = hs * k1 - ydiff
                t_starts[nsteps] = t
                h_signed[nsteps] = hs
                cont[nsteps, 0] = y
                cont[nsteps, 1] = ydiff
                cont[nsteps, 2] = bspl
                cont[nsteps, 3] = ydiff - hs * k7 - bspl
                cont[nsteps, 4] = hs * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7)
            nsteps += 1
            t = t + hs
            y = ynew
            k1 = k7
            hnew = h / fac
            hnew = min(hnew, hmax)
            if reject:
                hnew = min(hnew, h)
            reject = False
            h = hnew
        else:
            h = h / min(10.0, fac11 / safe)
            reject = True
    return y, STATUS_OK, nfev, nsteps, t_starts[:nsteps], h_signed[:nsteps], cont[:nsteps]


def _raise_for(status: int, nfev: int) -> None:
    if status == STATUS_BUDGET:
        raise IntegrationBudgetError(f"evaluation budget exhausted after {nfev} evaluations")
    if status == STATUS_STEP_UNDERFLOW:
        raise IntegrationBudgetError("step size underflow")


def solve(field: int, t0: float, t1: float, y0, args, settings: OdeSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """End state of the IVP; raises :class:`IntegrationBudgetError` on failure."""
    y, status, nfev, *_ = _dopri(
        field, float(t0), float(t1), np.ascontiguousarray(y0, dtype=np.float64),
        np.ascontiguousarray(args, dtype=np.float64),
        settings.rel_tol, settings.abs_tol, settings.max_step, settings.max_evals, False,
    )
    _raise_for(status, nfev)
    return y


@dataclass
class DenseSolution:
    """Accepted steps of one integration with the 4th-order continuous extension."""

    t0: float
    t1: float
    t_starts: np.ndarray
    h_signed: np.ndarray
    cont: np.ndarray
    y_end: np.ndarray
    nfev: int = 0
    status: int = STATUS_OK
    t_reached: float = field(default=0.0)

    @property
    def nodes(self) -> np.ndarray:
        return np.append(self.t_starts, self.t_reached)

    def step_index(self, t: float) -> int:
        if self.h_signed.size == 0:
            raise ValueError("empty dense solution")
        if self.h_signed[0] > 0:
            i = int(np.searchsorted(self.t_starts, t, side="right")) - 1
        else:
            i = int(np.searchsorted(-self.t_starts, -t, side="right")) - 1
        return min(max(i, 0), self.t_starts.size - 1)

    def __call__(self, t: float) -> np.ndarray:
        i = self.step_index(t)
        s = (t - self.t_starts[i]) / self.h_signed[i]
        s1 = 1.0 - s
        c = self.cont[i]
        return c[0] + s * (c[1] + s1 * (c[2] + s * (c[3] + s1 * c[4])))

    def local_step(self, t: float) -> float:
        return abs(self.h_signed[self.step_index(t)])

    def sample(self, ts) -> np.ndarray:
        return np.array([self(float(t)) for t in ts])


def solve_dense(field: int, t0: float, t1: float, y0, args, settings: OdeSettings = DEFAULT_SETTINGS,
                allow_partial: bool = False) -> DenseSolution:
    y, status, nfev, nsteps, ts, hs, cont = _dopri(
        field, float(t0), float(t1), np.ascontiguousarray(y0, dtype=np.float64),
        np.ascontiguousarray(args, dtype=np.float64),
        settings.rel_tol, settings.abs_tol, settings.max_step, settings.max_evals, True,
    )
    if not allow_partial:
        _raise_for(status, nfev)
    reached = float(ts[-1] + hs[-1]) if nsteps else float(t0)
    return DenseSolution(float(t0), float(t1), ts.copy(), hs.copy(), cont.copy(), y, nfev, status, reached)


# ---------------------------------------------------------------- torus equation

def torus_args(rp: ReducedParams) -> np.ndarray:
    return np.array([rp.ell, rp.eta, 2.0 * rp.mu, 0.0])


def flow_theta(rp: ReducedParams, theta0: float, tau0: float, tau1: float,
               s: OdeSettings = DEFAULT_SETTINGS) -> float:
    """Lifted solution of dtheta/dtau = eta cos(theta) + ell + 2 mu cos(tau)."""
    for v in (theta0, tau0, tau1):
        if not math.isfinite(v):
            raise ValueError("non-finite input")
    y = solve(fields.TORUS, tau0, tau1, np.array([theta0]), torus_args(rp), s)
    return float(y[0])


@njit(cache=True)
def _theta_batch(thetas, args, tau0, tau1, rtol, atol, hmax, max_evals):
    out = np.empty(thetas.shape[0])
    status = 0
    for i in range(thetas.shape[0]):
        y0 = np.empty(1)
        y0[0] = thetas[i]
        y, st, nfev, nst, a, b, c = _dopri(0, tau0, tau1, y0, args, rtol, atol, hmax, max_evals, False)
        if st != 0:
            status = st
        out[i] = y[0]
    return out, status


def flow_theta_many(args: np.ndarray, thetas, tau0: float, tau1: float,
                    s: OdeSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Vectorized lifted flow of the four-parameter torus field ``args``."""
    out, status = _theta_batch(np.ascontiguousarray(thetas, dtype=np.float64), np.asarray(args, dtype=np.float64),
                               float(tau0), float(tau1), s.rel_tol, s.abs_tol, s.max_step, s.max_evals)
    _raise_for(status, -1)
    return out


# ---------------------------------------------------------------- linear systems

@dataclass(frozen=True)
class PathInCStar:
    """Either an arc of the circle |z| = radius (tau from start to end) or a
    radial segment from r=start to r=end along angle ``angle``."""

    kind: str
    start: float
    end: float
    radius: float = 1.0
    angle: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("arc", "radial"):
            raise ValueError("kind must be 'arc' or 'radial'")
        if self.kind == "arc" and not self.radius > 0:
            raise ValueError("arc radius must be positive")
        if self.kind == "radial" and not (self.start > 0 and self.end > 0):
            raise ValueError("radial segment must avoid 0")
        for v in (self.start, self.end, self.radius, self.angle):
            if not math.isfinite(v):
                raise ValueError("path must avoid infinity")

    @staticmethod
    def unit_circle(tau0: float = 0.0, tau1: float = 2 * math.pi) -> PathInCStar:
        return PathInCStar("arc", tau0, tau1, 1.0, 0.0)

    def point(self, s: float) -> complex:
        if self.kind == "arc":
            return self.radius * complex(math.cos(s), math.sin(s))
        return s * complex(math.cos(self.angle), math.sin(self.angle))


def pack_coefficients(K2, K1, K0) -> np.ndarray:
    parts = []
    for M in (K2, K1, K0):
        M = np.asarray(M, dtype=complex)
        parts.append(M.real.ravel())
        parts.append(M.imag.ravel())
    return np.concatenate(parts)


def linear_args(coeffs: np.ndarray, path: PathInCStar, columns: int) -> np.ndarray:
    tail = [0.0, path.radius] if path.kind == "arc" else [1.0, path.angle]
    return np.concatenate([coeffs, tail, [float(columns)]])


def _pack_state(Y: np.ndarray) -> np.ndarray:
    return np.concatenate([Y.real.ravel(), Y.imag.ravel()])


def _unpack_state(y: np.ndarray, m: int) -> np.ndarray:
    n = 2 * m
    return (y[:n] + 1j * y[n:]).reshape(2, m)


def transport(K2, K1, K0, path: PathInCStar, Y0, s: OdeSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Carry the 2xm complex solution block ``Y0`` along ``path``."""
    Y0 = np.asarray(Y0, dtype=complex)
    if Y0.ndim == 1:
        Y0 = Y0.reshape(2, 1)
    m = Y0.shape[1]
    args = linear_args(pack_coefficients(K2, K1, K0), path, m)
    y = solve(fields.LINEAR, path.start, path.end, _pack_state(Y0), args, s)
    return _unpack_state(y, m)


def flow_linear(sys, path: PathInCStar, s: OdeSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Fundamental matrix of dY/dz = (K2/z^2 + K1/z + K0) Y along ``path`` with Y(start) = Id."""
    return transport(sys.K2, sys.K1, sys.K0, path, np.eye(2, dtype=complex), s)


# ---------------------------------------------------------------- variational equations

@dataclass(frozen=True)
class VariationalResult:
    theta: float
    d_eta: float
    d_mu: float
    d2_eta: float
    mixed: tuple[float, ...]


def flow_variational(rp0: ReducedParams, theta0: float, tau1: float,
                     s: OdeSettings = DEFAULT_SETTINGS) -> VariationalResult:
    """Parameter derivatives of theta(tau1) at mu = eta = 0 for integer nonzero ell."""
    if rp0.mu != 0.0 or rp0.eta != 0.0:
        raise ValueError("variational formulas are taken at mu = eta = 0")
    if rp0.ell != round(rp0.ell):
        raise ValueError("ell must be an integer")
    if rp0.ell == 0:
        raise ValueError("ell = 0 is unsupported")
    kmax = abs(int(round(rp0.ell)))
    y0 = np.zeros(4 + kmax)
    y0[0] = theta0
    y = solve(fields.VARIATIONAL, 0.0, tau1, y0, np.array([rp0.ell, 0.0, 0.0, float(kmax)]), s)
    return VariationalResult(float(y[0]), float(y[1]), float(y[2]), float(y[3]), tuple(float(v) for v in y[4:]))
