"""Isomonodromic flows of 2x2 linear systems with two irregular singular points.

* the general Jimbo field  t K' = [R, K], R' = [K, N], N' = 0 ;
* the normalized real flow on systems
      Y' = (-tau K / zeta^2 + R / zeta + tau N) Y,  N = diag(-1/2, 0),
  R = [[-ell, -R21], [R21, 0]], K conjugate to diag(1/2, 0),
  along which w = R21 / (tau K12) solves Painleve 3 ;
* the dynamical foliation of the four-parameter torus family
      dtheta/dtau = nu + a cos(theta) + s cos(tau) + psi cos(theta - tau)
  in the variable s, with first integral ell = nu - psi a / s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fields
from .integrate import DEFAULT_SETTINGS, DenseSolution, IntegrationBudgetError, OdeSettings, solve, solve_dense
from .monodromy import LinearSystem, formal_residue
from .params import PhysParams, to_reduced

N_DIAG = np.diag([-0.5, 0.0])
PROJECT_ABOVE = 1e-11


# ---------------------------------------------------------------- general flow

@dataclass(frozen=True)
class GeneralJimboState:
    t: float
    Ktilde: np.ndarray
    R: np.ndarray
    N: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return self.Ktilde / self.t

    def system(self) -> LinearSystem:
        return LinearSystem(-self.Ktilde, self.R, self.N)


def _cpack(*mats) -> np.ndarray:
    return np.concatenate([np.concatenate([np.asarray(m, complex).real.ravel(), np.asarray(m, complex).imag.ravel()])
                           for m in mats])


def _cunpack(y: np.ndarray, off: int) -> np.ndarray:
    return (y[off:off + 4] + 1j * y[off + 4:off + 8]).reshape(2, 2)


def isoflow_general(state: GeneralJimboState, t1: float,
                    s: OdeSettings = DEFAULT_SETTINGS) -> tuple[GeneralJimboState, dict]:
    """Advance along t K' = [R, K], R' = [K, N]; returns the new state and first-integral drift."""
    if not (state.t > 0 and t1 > 0):
        raise ValueError("t and t1 must be positive")
    y = solve(fields.GENERAL_JIMBO, state.t, t1, _cpack(state.K, state.R), _cpack(state.N)[:8], s)
    K1, R1 = _cunpack(y, 0), _cunpack(y, 8)
    out = GeneralJimboState(float(t1), K1 * t1, R1, np.asarray(state.N, complex))
    ev0 = np.sort_complex(np.linalg.eigvals(state.K))
    ev1 = np.sort_complex(np.linalg.eigvals(K1))
    drift = {"eigenvalues": float(np.abs(ev1 - ev0).max())}
    try:
        r0 = [formal_residue(state.system(), p) for p in ("0", "inf")]
        r1 = [formal_residue(out.system(), p) for p in ("0", "inf")]
        drift["formal_residues"] = float(max(np.abs(a - b).max() for a, b in zip(r0, r1)))
    except ValueError:
        drift["formal_residues"] = math.nan
    return out, drift


# ---------------------------------------------------------------- normalized flow

@dataclass(frozen=True)
class NormalizedJimboState:
    tau: float
    ell: float
    R21: float
    K: np.ndarray

    @property
    def R(self) -> np.ndarray:
        return np.array([[-self.ell, -self.R21], [self.R21, 0.0]])

    def system(self) -> LinearSystem:
        return LinearSystem(-self.tau * self.K, self.R, self.tau * N_DIAG)

    def invariant_defects(self) -> dict:
        K = self.K
        return {"trace": abs(np.trace(K) - 0.5), "det": abs(np.linalg.det(K)), "R21_positive": self.R21 > 0}


def chart_matrix(G21: float, R21: float, ell: float) -> np.ndarray:
    """Unimodular G with G11 = 1 and G12 fixed by the lower-right condition on G^{-1} R G."""
    G12 = -G21 * R21 / (G21 * ell + R21 * (1.0 + G21 * G21))
    return np.array([[1.0, G12], [G21, 1.0 + G12 * G21]])


def normalized_from_chart(G21: float, R21: float, ell: float, tau: float) -> NormalizedJimboState:
    if not (R21 > 0 and tau > 0):
        raise ValueError("R21 and tau must be positive")
    G = chart_matrix(G21, R21, ell)
    K = -G @ N_DIAG @ np.linalg.inv(G)
    return NormalizedJimboState(float(tau), float(ell), float(R21), K)


def chart_from_normalized(state: NormalizedJimboState) -> tuple[float, float, float, float]:
    """Inverse chart: K = (1/2) g h^T with g = (1, G21), so G21 = K21 / K11."""
    return float(state.K[1, 0] / state.K[0, 0]), state.R21, state.ell, state.tau


def josephson_state(p: PhysParams) -> NormalizedJimboState:
    """Natural inclusion of the junction system: K = diag(1/2, 0), tau = 2 mu, R21 = eta/2."""
    rp = to_reduced(p)
    if rp.mu <= 0:
        raise ValueError("inclusion needs mu > 0")
    return NormalizedJimboState(2.0 * rp.mu, rp.ell, rp.eta / 2.0, np.diag([0.5, 0.0]))


def w_of(state: NormalizedJimboState) -> float:
    """R21 / (tau K12); infinite at K12 = 0 (pole)."""
    k12 = state.K[0, 1]
    if k12 == 0:
        return math.inf
    return state.R21 / (state.tau * k12)


class ChartExitError(ValueError):
    """R21 reached zero: the diagonal gauge with R12 = -R21 no longer exists."""

    def __init__(self, msg: str, tau: float):
        super().__init__(msg)
        self.tau = tau


def _structure_drift(y: np.ndarray, ell: float, symmetric: bool = True) -> float:
    # defects relative to the size of the terms they combine (entries blow up near poles)
    K = y[:4].reshape(2, 2)
    k = max(1.0, float(np.abs(K).max()))
    r = max(1.0, abs(y[5]), abs(y[6]))
    worst = max(abs(y[4] + ell), abs(y[7]), abs(K[0, 0] + K[1, 1] - 0.5) / k,
                abs(K[0, 0] * K[1, 1] - K[0, 1] * K[1, 0]) / (k * k))
    if symmetric:
        worst = max(worst, abs(y[5] + y[6]) / r)
    return worst


def _gauge_normalize(y: np.ndarray) -> np.ndarray:
    """Diagonal conjugation by diag(d, 1) making R12 = -R21; needs R12 R21 < 0."""
    prod = -y[5] * y[6]
    if not prod > 0:
        raise ChartExitError("R12 R21 >= 0: no normalized representative", math.nan)
    d = math.sqrt(-y[5] / y[6])
    out = y.copy()
    # (D^-1 X D)_12 = X12 / d, (D^-1 X D)_21 = X21 d
    out[1], out[2] = y[1] / d, y[2] * d
    out[5], out[6] = y[5] / d, y[6] * d
    return out


def _project(y: np.ndarray, ell: float) -> np.ndarray:
    y = y.copy()
    r21 = 0.5 * (y[6] - y[5])
    y[4], y[5], y[6], y[7] = -ell, -r21, r21, 0.0
    K = y[:4].reshape(2, 2)
    vals, vecs = np.linalg.eig(K)
    order = np.argsort(-vals.real)
    V = vecs[:, order].real
    K = V @ np.diag([0.5, 0.0]) @ np.linalg.inv(V)
    y[:4] = K.ravel()
    return y


@dataclass
class NormalizedTrajectory:
    """Piecewise dense trajectory.  Segments flagged ``normalized`` carry R12 = -R21;
    the others were integrated without the gauge term and are normalized on demand.

    Across a pole of the entries the trajectory holds two one-sided segments; the
    unresolved interval between them is listed in ``gaps``."""

    ell: float
    segments: list[DenseSolution]
    normalized: list[bool] = field(default_factory=list)
    projections: int = 0
    max_drift: float = 0.0
    start: float = math.nan
    end: float = math.nan
    gaps: list[tuple[float, float]] = field(default_factory=list)

    @property
    def tau0(self) -> float:
        return self.start

    @property
    def tau1(self) -> float:
        return self.end

    def _segment(self, tau: float) -> DenseSolution:
        for seg in self.segments:
            lo, hi = sorted((seg.t0, seg.t_reached))
            if lo <= tau <= hi:
                return seg
        raise ValueError(f"tau={tau} outside the resolved trajectory")

    def raw(self, tau: float) -> np.ndarray:
        return self._segment(tau)(tau)

    def state(self, tau: float) -> NormalizedJimboState:
        y = self.raw(tau)
        if abs(y[5] + y[6]) > 1e-8 * max(1.0, abs(y[6])):
            y = _gauge_normalize(y)
        if not y[6] > 0:
            raise ChartExitError(f"R21 <= 0 at tau={tau}", tau)
        return NormalizedJimboState(float(tau), self.ell, float(0.5 * (y[6] - y[5])), y[:4].reshape(2, 2).copy())

    def system(self, tau: float) -> LinearSystem:
        """Linear system at tau in the integration gauge (diagonally conjugate to the normalized one)."""
        y = self.raw(tau)
        return LinearSystem(-tau * y[:4].reshape(2, 2), y[4:].reshape(2, 2), tau * N_DIAG)

    def K12(self, tau: float) -> float:
        return float(self.raw(tau)[1])

    def w(self, tau: float) -> float:
        # -R12 / (tau K12) is invariant under diagonal gauge
        y = self.raw(tau)
        return float(-y[5] / (tau * y[1]))

    def nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([seg.nodes for seg in self.segments]))

    def local_step(self, tau: float) -> float:
        return self._segment(tau).local_step(tau)

    def in_chart(self, tau: float) -> bool:
        y = self.raw(tau)
        return bool(-y[5] * y[6] > 0)


# leave the gauge term when R21 drops below this fraction of its launch value, return above REENTER
EXIT_FRACTION = 0.1
REENTER_FRACTION = 0.2
# radii tried for the complex detour around a pole of the entries
DETOUR_RADII = (0.1, 0.06, 0.16)


def _arc_detour(y: np.ndarray, t_from: float, t_to: float, s: OdeSettings) -> np.ndarray:
    """Continue the gauge-free flow from t_from to t_to along the upper half circle in complex tau."""
    center, radius = 0.5 * (t_from + t_to), 0.5 * abs(t_to - t_from)
    phi0, phi1 = (math.pi, 0.0) if t_to > t_from else (0.0, math.pi)
    yc = np.concatenate([y, np.zeros(8)])
    out = solve(fields.NORMALIZED_JIMBO_ARC, phi0, phi1, yc, np.array([center, radius]), s)
    re, im = out[:8], out[8:]
    if np.abs(im).max() > 1e-6 * max(1.0, np.abs(re).max()):
        raise IntegrationBudgetError(f"detour returned a non-real state (|Im| = {np.abs(im).max():.2e})")
    return re


def _pass_pole(traj: NormalizedTrajectory, partial: DenseSolution, direction: float,
               s: OdeSettings) -> tuple[float, np.ndarray]:
    """Step over a pole met by the gauge-free real flow at partial.t_reached.

    Entries of the isomonodromic family are meromorphic in tau, so a half circle around the
    pole lands on the same real solution.  The far side is integrated back toward the pole
    so that the real axis stays covered up to a tiny gap."""
    t_fail = partial.t_reached
    lo, hi = sorted((traj.start, t_fail))
    for radius in DETOUR_RADII:
        radius = min(radius, 0.25 * t_fail)
        t_from = t_fail - direction * radius
        if not lo <= t_from <= hi:
            continue
        lo_p, hi_p = sorted((partial.t0, partial.t_reached))
        y_from = partial(t_from) if lo_p <= t_from <= hi_p else traj.raw(t_from)
        t_to = t_fail + direction * radius
        try:
            y_to = _arc_detour(y_from, t_from, t_to, s)
        except IntegrationBudgetError:
            continue
        back = solve_dense(fields.NORMALIZED_JIMBO, t_to, t_fail, y_to, np.zeros(1), s, allow_partial=True)
        traj.segments.append(back)
        traj.normalized.append(False)
        traj.gaps.append(tuple(sorted((t_fail, back.t_reached))))
        return t_to, y_to
    raise IntegrationBudgetError(f"could not pass the pole near tau={t_fail:.6g}")


def isoflow_normalized(state: NormalizedJimboState, tau1: float, s: OdeSettings = DEFAULT_SETTINGS,
                       segment_length: float = 0.25, continue_outside: bool = False) -> NormalizedTrajectory:
    """Integrate the normalized isomonodromic field from state.tau to tau1.

    Between segments the state is re-projected onto the constraint set when the drift exceeds
    PROJECT_ABOVE.  When R21 approaches zero the normalized chart ends: by default this raises
    ChartExitError; with ``continue_outside`` the same isomonodromic family is followed without
    the diagonal-gauge term (entries then differ from the normalized ones by a diagonal
    conjugation), poles of the entries are passed through complex tau, and the gauge term is
    restored once R12 R21 < 0 again."""
    if not (state.tau > 0 and tau1 > 0):
        raise ValueError("tau and tau1 must be positive")
    y = np.concatenate([state.K.ravel(), state.R.ravel()]).astype(float)
    direction = 1.0 if tau1 >= state.tau else -1.0
    traj = NormalizedTrajectory(state.ell, [], start=float(state.tau), end=float(tau1))
    r_exit, r_enter = EXIT_FRACTION * state.R21, REENTER_FRACTION * state.R21
    gauge = True
    a = float(state.tau)
    while direction * (tau1 - a) > 1e-14 * max(1.0, abs(tau1)):
        b = a + direction * min(segment_length, abs(tau1 - a))
        sol = None
        if gauge:
            sol = solve_dense(fields.NORMALIZED_JIMBO, a, b, y, np.ones(1), s, allow_partial=True)
            low = sol.status != 0 or min(sol(float(t))[6] for t in sol.nodes) < r_exit
            if low:
                if not continue_outside:
                    raise ChartExitError(f"R21 approaches 0 near tau={sol.t_reached:.6g}", sol.t_reached)
                gauge, sol = False, None
        if sol is None:
            sol = solve_dense(fields.NORMALIZED_JIMBO, a, b, y, np.zeros(1), s, allow_partial=True)
        traj.segments.append(sol)
        traj.normalized.append(gauge)
        if sol.status != 0:
            a, y = _pass_pole(traj, sol, direction, s)
            traj.max_drift = max(traj.max_drift, _structure_drift(y, state.ell, False))
            continue
        y = sol.y_end
        a = b
        d = _structure_drift(y, state.ell, gauge)
        traj.max_drift = max(traj.max_drift, d)
        if not gauge and -y[5] * y[6] > r_enter * r_enter:
            y, gauge = _gauge_normalize(y), True
        if gauge and d > PROJECT_ABOVE:
            y = _project(y, state.ell)
            traj.projections += 1
    return traj


def max_structure_drift(traj: NormalizedTrajectory) -> float:
    """Largest constraint violation over all accepted step nodes (the R12 = -R21 condition
    only on gauge-normalized segments)."""
    worst = 0.0
    for seg, normalized in zip(traj.segments, traj.normalized):
        for t in seg.nodes:
            worst = max(worst, _structure_drift(seg(float(t)), traj.ell, normalized))
    return worst


# ---------------------------------------------------------------- Painleve 3

@dataclass(frozen=True)
class P3Residual:
    max_residual: float
    per_point: np.ndarray
    skipped: tuple[int, ...]


def p3_rhs(tau, w, dw, ell):
    return dw * dw / w - dw / tau - 2.0 * ell * w * w / tau + (2.0 * ell - 2.0) / tau + w**3 - 1.0 / w


def p3_residual(taus, ws, ell: float, w_max: float = 10.0) -> P3Residual:
    """Residual of Painleve 3 from 5-point central differences on equally spaced samples.

    Points whose stencil has |w| > w_max or |w| < 1/w_max are skipped (close to poles or zeros)."""
    taus = np.asarray(taus, float)
    ws = np.asarray(ws, float)
    h = taus[1] - taus[0]
    res = np.full(ws.size, np.nan)
    skipped = []
    for i in range(2, ws.size - 2):
        st = ws[i - 2:i + 3]
        if np.any(np.abs(st) > w_max) or np.any(np.abs(st) < 1.0 / w_max) or not np.all(np.isfinite(st)):
            skipped.append(i)
            continue
        d1 = (-st[4] + 8 * st[3] - 8 * st[1] + st[0]) / (12 * h)
        d2 = (-st[4] + 16 * st[3] - 30 * st[2] + 16 * st[1] - st[0]) / (12 * h * h)
        res[i] = abs(d2 - p3_rhs(taus[i], st[2], d1, ell))
    valid = res[np.isfinite(res)]
    return P3Residual(float(valid.max()) if valid.size else math.nan, res, tuple(skipped))


def sample_w(traj, step: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    a, b = sorted((traj.tau0, traj.tau1))
    # guard against (b - a) / step landing just below an integer
    n = int(math.floor((b - a) / step * (1.0 + 1e-12)))
    ts = a + step * np.arange(n + 1)
    return ts, np.array([_w_or_nan(traj, float(t)) for t in ts])


def _w_or_nan(traj, t: float) -> float:
    # nan inside an unresolved gap at a pole of the entries
    try:
        return traj.w(t)
    except ValueError:
        return math.nan


# ---------------------------------------------------------------- poles / Josephson crossings

@dataclass(frozen=True)
class Crossing:
    tau0: float
    residue: float
    K: np.ndarray
    double_root: bool = False


def _bisect(f, a: float, b: float, fa: float, tol: float = 1e-15) -> float:
    for _ in range(200):
        m = 0.5 * (a + b)
        if m in (a, b) or abs(b - a) < tol * max(1.0, abs(m)):
            break
        fm = f(m)
        if fm == 0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def residue_fit(traj: NormalizedTrajectory, tau0: float, delta: float | None = None) -> float:
    """Constant term of a cubic fit of (tau - tau0) w(tau) on |tau - tau0| in [5 delta, 50 delta]."""
    if delta is None:
        delta = min(traj.local_step(tau0), 2e-4)
    lo, hi = sorted((traj.tau0, traj.tau1))
    xs = []
    for side in (-1.0, 1.0):
        for k in np.linspace(5.0, 50.0, 12):
            t = tau0 + side * k * delta
            if lo <= t <= hi:
                xs.append(t - tau0)
    xs = np.array(xs)
    ys = np.array([x * _w_or_nan(traj, tau0 + x) for x in xs])
    keep = np.isfinite(ys)
    xs, ys = xs[keep], ys[keep]
    coef = np.polynomial.polynomial.polyfit(xs, ys, 3)
    return float(coef[0])


def _crossing_K(traj: NormalizedTrajectory, tau: float) -> np.ndarray:
    try:
        return traj.state(tau).K
    except ChartExitError:
        return traj.raw(tau)[:4].reshape(2, 2).copy()


def detect_jos_crossing(traj: NormalizedTrajectory, zero_tol: float = 1e-12) -> list[Crossing]:
    """Zeros of K12 along the trajectory with residue estimates of w there.

    A zero where K12 touches 0 without changing sign is flagged as a double root."""
    out: list[Crossing] = []
    scale = max(max(abs(seg(float(t))[1]) for t in seg.nodes) for seg in traj.segments)
    scale = max(scale, 1e-300)

    def record(t0: float, double: bool) -> None:
        if out and abs(out[-1].tau0 - t0) < 1e-12 * max(1.0, abs(t0)):
            return
        res = math.nan if double else residue_fit(traj, t0)
        out.append(Crossing(float(t0), res, _crossing_K(traj, t0), double))

    first = traj.segments[0]
    if abs(first(first.t0)[1]) <= zero_tol * scale:
        record(first.t0, False)
    for seg in traj.segments:
        nodes = seg.nodes
        vals = np.array([seg(float(t))[1] for t in nodes])
        k12 = lambda t, seg=seg: float(seg(t)[1])  # noqa: E731
        for i in range(len(nodes) - 1):
            a, b = float(nodes[i]), float(nodes[i + 1])
            fa, fb = vals[i], vals[i + 1]
            if abs(fa) <= zero_tol * scale:
                continue
            if fb == 0.0:
                record(b, False)
            elif fa * fb < 0:
                record(_bisect(k12, a, b, fa), False)
            elif 0 < i and abs(fa) <= 1e-8 * scale and abs(vals[i - 1]) > abs(fa) < abs(fb):
                record(a, True)
    out.sort(key=lambda c: c.tau0 if traj.tau1 >= traj.tau0 else -c.tau0)
    return out


# ---------------------------------------------------------------- dynamical foliation

@dataclass(frozen=True)
class DynFoliationState:
    s: float
    psi: float
    a: float
    ell: float

    @property
    def nu(self) -> float:
        return self.ell + self.psi * self.a / self.s

    def torus_args(self) -> np.ndarray:
        return np.array([self.nu, self.a, self.s, self.psi])

    def system(self) -> LinearSystem:
        """Linear system whose projectivization is the four-parameter torus field."""
        half = self.s / 2.0
        K2 = np.array([[-half, -self.psi / 2.0], [0.0, 0.0]], dtype=complex)
        K1 = np.array([[-self.nu, -self.a / 2.0], [self.a / 2.0, 0.0]], dtype=complex)
        K0 = np.array([[-half, 0.0], [self.psi / 2.0, 0.0]], dtype=complex)
        return LinearSystem(K2, K1, K0)


@dataclass
class FoliationTrajectory:
    ell: float
    sol: DenseSolution

    def state(self, s: float) -> DynFoliationState:
        y = self.sol(s)
        return DynFoliationState(float(s), float(y[0]), float(y[1]), self.ell)

    @property
    def tau0(self) -> float:
        return self.sol.t0

    @property
    def tau1(self) -> float:
        return self.sol.t_reached

    def w(self, s: float) -> float:
        y = self.sol(s)
        if y[0] == 0:
            return math.inf
        return float(y[1] / y[0])

    def psi_crossings(self, skip_start: bool = True) -> list[tuple[float, float]]:
        """(s, a) at sign changes of psi, located on the dense output."""
        nodes = self.sol.nodes
        vals = np.array([self.sol(float(t))[0] for t in nodes])
        out = []
        for i in range(len(nodes) - 1):
            fa, fb = vals[i], vals[i + 1]
            if i == 0 and skip_start and abs(fa) < 1e-12:
                continue
            if fa * fb < 0:
                f = lambda t: float(self.sol(t)[0])  # noqa: E731
                t0 = _bisect(f, float(nodes[i]), float(nodes[i + 1]), fa)
                out.append((t0, float(self.sol(t0)[1])))
        return out


def dyn_foliation_flow(state: DynFoliationState, s1: float, settings: OdeSettings = DEFAULT_SETTINGS,
                       allow_partial: bool = False) -> FoliationTrajectory:
    if not (state.s > 0 and s1 > 0):
        raise ValueError("s and s1 must be positive")
    if state.psi == 0 and state.a == 0:
        raise ValueError("(a, psi) = (0, 0) is degenerate")
    sol = solve_dense(fields.FOLIATION, state.s, s1, np.array([state.psi, state.a]), np.array([state.ell]),
                      settings, allow_partial=allow_partial)
    return FoliationTrajectory(state.ell, sol)


def embed_josephson(p: PhysParams) -> DynFoliationState:
    rp = to_reduced(p)
    if rp.mu <= 0:
        raise ValueError("embedding needs A > 0")
    return DynFoliationState(2.0 * rp.mu, 0.0, rp.eta, rp.ell)


@dataclass(frozen=True)
class ReturnResult:
    params: PhysParams | None
    s_cross: float | None
    state: DynFoliationState | None = None


def josephson_return_map(p: PhysParams, direction: str = "forward", settings: OdeSettings = DEFAULT_SETTINGS,
                         s_budget: float = 40.0) -> ReturnResult:
    """Next transversal crossing of psi = 0 with a > 0 along the foliation leaf through p.

    Searches s within s_budget of the launch value (down to s_budget^-1 times it when
    going backward).  ``params`` is None when no crossing exists in that window."""
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    st = embed_josephson(p)
    s1 = st.s + s_budget if direction == "forward" else st.s / s_budget
    traj = dyn_foliation_flow(st, s1, settings, allow_partial=True)
    for s_cross, a in traj.psi_crossings():
        if a > 0:
            image = DynFoliationState(s_cross, 0.0, a, st.ell)
            omega = 1.0 / a
            return ReturnResult(PhysParams(st.ell * omega, s_cross * omega, omega), s_cross, image)
    if traj.sol.status != 0:
        raise IntegrationBudgetError(f"foliation flow stopped at s={traj.sol.t_reached:.6g} before any crossing")
    return ReturnResult(None, None, None)


# ---------------------------------------------------------------- export

def trajectory_rows(traj, step: float = 1e-3, kind: str = "normalized") -> tuple[list[str], list[list[float]]]:
    """Equally spaced samples with w and the pointwise Painleve-3 residual; samples that fall
    inside an unresolved pole gap are omitted."""
    ts, ws = sample_w(traj, step)
    p3 = p3_residual(ts, ws, traj.ell).per_point
    if kind == "normalized":
        header = ["s_or_tau", "K11", "K12", "K21", "K22", "R11", "R12", "R21", "R22", "normalized", "w", "p3_residual"]
        rows = []
        for t, w, r in zip(ts, ws, p3):
            if not math.isfinite(w):
                continue
            y = traj.raw(float(t))
            flag = 1.0
            try:
                y = _gauge_normalize(y)
            except ChartExitError:
                flag = 0.0
            rows.append([float(t), *map(float, y), flag, float(w), float(r)])
    else:
        header = ["s_or_tau", "psi", "a", "ell", "nu", "w", "p3_residual"]
        rows = []
        for t, w, r in zip(ts, ws, p3):
            st = traj.state(float(t))
            rows.append([float(t), st.psi, st.a, st.ell, st.nu, float(w), float(r)])
    return header, rows



