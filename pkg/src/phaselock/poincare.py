"""Period-2pi flow map of the torus equation, lifted to the line, and rotation numbers."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .integrate import DEFAULT_SETTINGS, OdeSettings, flow_theta, flow_theta_many, torus_args
from .monodromy import josephson_coefficients, monodromy_matrix
from .params import PhysParams, ReducedParams, to_reduced

TWO_PI = 2.0 * math.pi
PARABOLIC_TOL = 1e-9
ORBIT_ITERATES = 100_000


@dataclass(frozen=True)
class LiftedMapSample:
    theta_in: float
    theta_out: float


@dataclass(frozen=True)
class RotationResult:
    rho: float
    method: str
    winding: int
    certified_error: float

    def to_json(self) -> dict:
        return {"rho": self.rho, "method": self.method, "winding": self.winding,
                "certified_error": self.certified_error}


def poincare_map(rp: ReducedParams, theta0: float, s: OdeSettings = DEFAULT_SETTINGS) -> float:
    return flow_theta(rp, theta0, 0.0, TWO_PI, s)


def poincare_samples(rp: ReducedParams, thetas, s: OdeSettings = DEFAULT_SETTINGS) -> list[LiftedMapSample]:
    out = flow_theta_many(torus_args(rp), thetas, 0.0, TWO_PI, s)
    return [LiftedMapSample(float(a), float(b)) for a, b in zip(thetas, out)]


def displacement_sup(rp: ReducedParams, ell: int, theta_grid, s: OdeSettings = DEFAULT_SETTINGS) -> float:
    """max |P(theta) - theta - 2 pi ell| over the grid."""
    grid = np.asarray(theta_grid, dtype=float)
    out = flow_theta_many(torus_args(rp), grid, 0.0, TWO_PI, s)
    return float(np.max(np.abs(out - grid - TWO_PI * ell)))


def mobius_action(M: np.ndarray, phi: complex) -> complex:
    return (M[1, 0] + M[1, 1] * phi) / (M[0, 0] + M[0, 1] * phi)


class MobiusLift:
    """Closed-form lift of the circle map Phi -> (M21 + M22 Phi)/(M11 + M12 Phi).

    Writing the map as e^{i beta}(Phi - c)/(1 - conj(c) Phi) with |c| < 1 gives
    the lift y -> y + shift + 2 arg(1 - c e^{-iy}); the integer part of
    ``shift`` is fixed by one lifted anchor value P(x0)."""

    def __init__(self, M: np.ndarray, anchor_in: float, anchor_out: float):
        self.M = np.asarray(M, dtype=complex)
        self.c = -self.M[1, 0] / self.M[1, 1]
        if not abs(self.c) < 1.0:
            raise ValueError("matrix does not define an orientation-preserving circle map")
        u = mobius_action(self.M, 1.0) * (1.0 - self.c.conjugate()) / (1.0 - self.c)
        beta = cmath.phase(u)
        base = anchor_in + beta + self._twist(anchor_in)
        k = round((anchor_out - base) / TWO_PI)
        self.shift = beta + TWO_PI * k
        self.anchor_mismatch = abs(anchor_out - (base + TWO_PI * k))

    def _twist(self, y):
        return 2.0 * np.angle(1.0 - self.c * np.exp(-1j * np.asarray(y)))

    def __call__(self, y):
        return y + self.shift + self._twist(y)

    def iterate(self, y: float, n: int) -> float:
        return _iterate_lift(float(y), float(self.shift), complex(self.c), int(n))


@njit(cache=True)
def _iterate_lift(y, shift, c, n):
    for _ in range(n):
        w = 1.0 - c * complex(math.cos(y), -math.sin(y))
        y = y + shift + 2.0 * math.atan2(w.imag, w.real)
    return y


def classify_mobius(M: np.ndarray) -> tuple[str, float]:
    """Return ('elliptic'|'parabolic'|'hyperbolic', tr^2/det - 4)."""
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    kappa = float((np.trace(M) ** 2 / det).real) - 4.0
    if abs(kappa) < PARABOLIC_TOL:
        return "parabolic", kappa
    return ("elliptic" if kappa < 0 else "hyperbolic"), kappa


def circle_fixed_points(M: np.ndarray) -> list[complex]:
    """Roots of b Phi^2 + (a - d) Phi - c = 0 for M = [[a, b], [c, d]]."""
    a, b, c, d = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    if abs(b) < 1e-300:
        return [c / (a - d)] if abs(a - d) > 0 else []
    return list(np.roots([b, a - d, -c]))


def _conjugating_lift(f: complex, y):
    # lift of the disk automorphism sending f to 0
    return y + 2.0 * np.angle(1.0 - f * np.exp(-1j * np.asarray(y)))


def rotation_number(p: PhysParams, s: OdeSettings = DEFAULT_SETTINGS) -> RotationResult:
    """Rotation number of the torus flow via the monodromy of the linear system."""
    rp = to_reduced(p)
    M = monodromy_matrix(josephson_coefficients(rp), s)
    x0 = 0.0
    px0 = poincare_map(rp, x0, s)
    lift = MobiusLift(M, x0, px0)
    if lift.anchor_mismatch > 1e-6:
        raise RuntimeError(f"scalar flow and projectivized monodromy disagree by {lift.anchor_mismatch:.2e}")
    winding = int(math.floor((px0 - x0) / TWO_PI))
    kind, _ = classify_mobius(M)
    err = max(10.0 * s.rel_tol, lift.anchor_mismatch) / TWO_PI
    if kind == "elliptic":
        f = min(circle_fixed_points(M), key=abs)
        rho = float(_conjugating_lift(f, lift(x0)) - _conjugating_lift(f, x0)) / TWO_PI
        return RotationResult(rho, "mobius-eigenvalue", winding, err)
    if kind == "hyperbolic":
        roots = circle_fixed_points(M)
        ys = [cmath.phase(r) for r in roots] or [x0]
        vals = [(float(lift(y)) - y) / TWO_PI for y in ys]
        rho = float(round(vals[0]))
        return RotationResult(rho, "mobius-eigenvalue", winding, err)
    n = ORBIT_ITERATES
    rho = (lift.iterate(x0, n) - x0) / (TWO_PI * n)
    return RotationResult(rho, "iteration", winding, 1.0 / n)
