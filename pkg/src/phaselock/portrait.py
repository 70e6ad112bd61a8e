"""Phase-lock area boundaries, growth points, constrictions and portrait export."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq, least_squares, minimize_scalar

from . import __version__
from .heun import SCORE_THRESHOLD, conjugate_poly_determinant, entire_solution_score
from .integrate import DEFAULT_SETTINGS, OdeSettings, flow_theta_many, torus_args
from .monodromy import josephson_coefficients, monodromy_matrix, triviality_defect
from .params import PhysParams, to_heun, to_reduced
from .poincare import classify_mobius, displacement_sup, rotation_number

TWO_PI = 2.0 * math.pi
SCHEMA = "portrait-v1"
ACCEPT_LEVEL = 1e-7
DISPLACEMENT_LEVEL = 1e-6
GRID64 = np.linspace(0.0, TWO_PI, 64, endpoint=False)


class NoSignChangeError(ValueError):
    pass


# ---------------------------------------------------------------- Bessel functions

def _bessel_series(n: int, x: float) -> float:
    # x is a binary rational, so the alternating series is summed exactly
    half = Fraction(x) / 2
    q = -half * half
    term = half**n / math.factorial(n)
    total = term
    k = 0
    bound = Fraction(1, 10**30)
    while True:
        k += 1
        term = term * q / (k * (k + n))
        total += term
        if k > abs(float(half)) and abs(term) < bound * abs(total):
            break
    return float(total)


def _bessel_miller(n: int, x: float) -> float:
    ax = abs(x)
    m = 2 * ((max(n, int(ax)) + 20 + int(math.sqrt(40.0 * max(n, ax)))) // 2)
    jp, j = 0.0, 1e-30
    norm = 0.0
    result = 0.0
    for k in range(m, 0, -1):
        jm = 2.0 * k / ax * j - jp
        jp, j = j, jm
        if abs(j) > 1e250:
            j *= 1e-250
            jp *= 1e-250
            norm *= 1e-250
            result *= 1e-250
        if k - 1 == n:
            result = j
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j
    norm += j  # J_0 term
    return result / norm


def bessel_j(n: int, x: float) -> float:
    """J_n(x) for integer n: ascending series for |x| <= 12, Miller recurrence beyond."""
    if n < 0:
        return (-1) ** (-n) * bessel_j(-n, x)
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if x < 0:
        return (-1) ** n * bessel_j(n, -x)
    if x <= 12.0:
        return _bessel_series(n, x)
    return _bessel_miller(n, x)


# ---------------------------------------------------------------- boundaries

@dataclass(frozen=True)
class BoundaryPoint:
    r: int
    alpha: float
    A: float
    B: float
    omega: float
    residual: float = 0.0


def fixed_point_defect(r: int, alpha: float, A: float, B: float, omega: float,
                       s: OdeSettings = DEFAULT_SETTINGS) -> float:
    """d(B) = P_B(alpha) - alpha - 2 pi r, increasing in B."""
    rp = to_reduced(PhysParams(B, A, omega))
    out = flow_theta_many(torus_args(rp), np.array([alpha]), 0.0, TWO_PI, s)
    return float(out[0] - alpha - TWO_PI * r)


def default_bracket(r: int, omega: float) -> tuple[float, float]:
    # |P(alpha) - alpha - 2 pi ell| < 2 pi eta, so d changes sign within r omega -/+ 1
    return r * omega - 1.0 - 1e-3, r * omega + 1.0 + 1e-3


def boundary_point(r: int, alpha: float, A: float, omega: float, bracket: tuple[float, float] | None = None,
                   s: OdeSettings = DEFAULT_SETTINGS) -> BoundaryPoint:
    """B = G_{r,alpha}(A): the abscissa where the period map fixes alpha with r turns."""
    lo, hi = bracket if bracket is not None else default_bracket(r, omega)
    f = lambda B: fixed_point_defect(r, alpha, A, B, omega, s)  # noqa: E731
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise NoSignChangeError(f"no sign change of d on [{lo}, {hi}]")
    B = brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    res = f(B)
    if abs(res) >= 1e-9:
        raise RuntimeError(f"boundary root not resolved, |d| = {abs(res):.2e}")
    return BoundaryPoint(int(r), float(alpha), float(A), float(B), float(omega), abs(res))


def growth_point(r: int, omega: float) -> float:
    if r == 0:
        raise ValueError("r = 0 has no growth point")
    return math.copysign(math.sqrt(r * r * omega * omega + 1.0), r)


def locate_growth_by_rotation(r: int, omega: float, tol: float = 1e-9,
                              s: OdeSettings = DEFAULT_SETTINGS) -> float:
    """Bisection on rho(B, 0) >= r between r omega and r omega + 2 (r > 0)."""
    lo, hi = r * omega, r * omega + 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rotation_number(PhysParams(mid, 0.0, omega), s).rho >= r:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- constrictions

@dataclass(frozen=True)
class Constriction:
    ell: int
    A: float
    omega: float
    B: float
    residual: float
    defect: float = 0.0
    heun_score: float = math.nan
    heun_determinant: float = math.nan
    type: str = "positive"


def monodromy_defect(ell: float, A: float, omega: float, s: OdeSettings = DEFAULT_SETTINGS,
                     B: float | None = None) -> float:
    """D = ||M - Id||_F for the system at (B, A, omega), B defaulting to ell*omega."""
    B = ell * omega if B is None else B
    M = monodromy_matrix(josephson_coefficients(to_reduced(PhysParams(B, A, omega))), s)
    return triviality_defect(M)


def defect_profile(ell: int, omega: float, A_values, s: OdeSettings = DEFAULT_SETTINGS) -> np.ndarray:
    return np.array([monodromy_defect(ell, float(a), omega, s) for a in A_values])


def scan_step(omega: float) -> float:
    return 0.01 * max(1.0, omega)


def _candidate_indices(D: np.ndarray) -> list[int]:
    """Every grid local minimum of D.  Near a constriction D is V-shaped with a slope that
    grows with A, so the grid value next to a true zero can still be large; refinement
    and the acceptance level decide."""
    return [i for i in range(1, len(D) - 1) if D[i] <= D[i - 1] and D[i] <= D[i + 1]]


def find_constrictions(ell: int, omega: float, A_range: tuple[float, float],
                       s: OdeSettings = DEFAULT_SETTINGS, step: float | None = None,
                       validate: bool = True) -> list[Constriction]:
    """Trivial-monodromy points on B = ell omega with A in (A_lo, A_hi]."""
    if ell < 0 or int(ell) != ell:
        raise ValueError("ell must be a non-negative integer")
    if not omega > 0:
        raise ValueError("omega must be positive")
    lo, hi = A_range
    h = scan_step(omega) if step is None else step
    n = max(2, int(math.ceil((hi - lo) / h)))
    grid = np.linspace(lo, hi, n + 1)
    if grid[0] == 0.0:
        grid[0] = min(1e-6, 0.5 * h)
    D = defect_profile(ell, omega, grid, s)
    found: list[Constriction] = []
    for i in _candidate_indices(D):
        f = lambda a: monodromy_defect(ell, a, omega, s)  # noqa: E731
        res = minimize_scalar(f, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                              options={"xtol": 1e-12, "maxiter": 200})
        A_star, d_star = float(res.x), float(res.fun)
        if d_star >= ACCEPT_LEVEL or not (lo < A_star <= hi):
            continue
        rp = to_reduced(PhysParams(ell * omega, A_star, omega))
        disp = displacement_sup(rp, ell, GRID64, s)
        score, det = math.nan, math.nan
        if validate:
            hp = to_heun(PhysParams(ell * omega, A_star, omega))
            score = entire_solution_score(hp)
            det = conjugate_poly_determinant(ell, hp.lam, hp.mu) if ell >= 1 else math.nan
            if disp >= DISPLACEMENT_LEVEL:
                continue
        found.append(Constriction(int(ell), A_star, float(omega), ell * omega, disp, d_star, score, det))
    return found


def heun_agrees(c: Constriction) -> bool:
    return c.heun_score < SCORE_THRESHOLD


def interior_certified(ell: int, B: float, A: float, omega: float, beta: float,
                       s: OdeSettings = DEFAULT_SETTINGS) -> bool:
    """rho = ell at (B, A) with a hyperbolic period map, and rho = ell at B -/+ beta."""
    p = PhysParams(B, A, omega)
    r = rotation_number(p, s)
    if abs(r.rho - ell) > 1e-9:
        return False
    M = monodromy_matrix(josephson_coefficients(to_reduced(p)), s)
    kind, _ = classify_mobius(M)
    if kind != "hyperbolic":
        return False
    return all(abs(rotation_number(PhysParams(b, A, omega), s).rho - ell) <= 1e-9 for b in (B - beta, B + beta))


def constriction_type(c: Constriction, deltas=(1e-2, 1e-3), s: OdeSettings = DEFAULT_SETTINGS) -> str:
    """'positive' when both vertical probes A -/+ delta lie in the interior of L_ell."""
    for delta in deltas:
        beta = 1e-3 * delta
        up = interior_certified(c.ell, c.B, c.A + delta, c.omega, beta, s)
        down = interior_certified(c.ell, c.B, c.A - delta, c.omega, beta, s)
        if up and down:
            return "positive"
        if not up and not down:
            rho_up = rotation_number(PhysParams(c.B, c.A + delta, c.omega), s).rho
            rho_dn = rotation_number(PhysParams(c.B, c.A - delta, c.omega), s).rho
            if abs(rho_up - c.ell) > 1e-9 and abs(rho_dn - c.ell) > 1e-9:
                return "negative"
    return "neutral"


def _scalar_residual(x: np.ndarray, omega: float, s: OdeSettings) -> np.ndarray:
    B, A = x
    M = monodromy_matrix(josephson_coefficients(to_reduced(PhysParams(B, A, omega))), s)
    v = np.array([M[0, 1], M[1, 0], M[0, 0] - M[1, 1]])
    return np.concatenate([v.real, v.imag])


def align_search(c: Constriction, offset: float = 0.05, s: OdeSettings = DEFAULT_SETTINGS) -> tuple[float, float]:
    """Unconstrained search in (B, A) for a projectively trivial monodromy
    (M a multiple of Id), seeded at (B + offset, A)."""
    res = least_squares(_scalar_residual, x0=np.array([c.B + offset, c.A]), args=(c.omega, s),
                        method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
    return float(res.x[0]), float(res.x[1])


@dataclass
class GhostReport:
    ell: int
    omega: float
    constrictions: list[Constriction]
    violations: list[str] = field(default_factory=list)


def ghost_scan(ell: int, omega: float, A_range: tuple[float, float],
               s: OdeSettings = DEFAULT_SETTINGS) -> GhostReport:
    cons = find_constrictions(ell, omega, A_range, s)
    rep = GhostReport(ell, omega, cons)
    for c in cons:
        rho = rotation_number(PhysParams(c.B, c.A, omega), s).rho
        if abs(rho - ell) > 1e-9:
            rep.violations.append(f"A={c.A:.10f}: rho={rho} differs from ell")
        kind = constriction_type(c, s=s)
        if kind != "positive":
            rep.violations.append(f"A={c.A:.10f}: type {kind}")
    return rep


def asymptotic_error(r: int, omega: float, A: float, s: OdeSettings = DEFAULT_SETTINGS) -> tuple[float, float]:
    """|G_{r,0}(A) - r omega + J_r(-A/omega)| and |G_{r,pi}(A) - r omega - J_r(-A/omega)|."""
    j = bessel_j(r, -A / omega)
    g0 = boundary_point(r, 0.0, A, omega, s=s).B
    gpi = boundary_point(r, math.pi, A, omega, s=s).B
    return abs(g0 - r * omega + j), abs(gpi - r * omega - j)


# ---------------------------------------------------------------- portraits

def _round(x: float) -> float:
    return float(f"{x:.10g}")


@dataclass
class Portrait:
    omega: float
    r_max: int
    A_max: float
    A_samples: list[float]
    curves: list[dict]
    growth_points: list[dict]
    constrictions: list[dict]
    metadata: dict

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "omega": self.omega,
            "r_max": self.r_max,
            "A_max": self.A_max,
            "A_samples": self.A_samples,
            "curves": self.curves,
            "growth_points": self.growth_points,
            "constrictions": self.constrictions,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, d: dict) -> Portrait:
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported schema {d.get('schema')!r}")
        return cls(d["omega"], d["r_max"], d["A_max"], d["A_samples"], d["curves"], d["growth_points"],
                   d["constrictions"], d["metadata"])


def _curve_task(args) -> dict:
    r, alpha, omega, A_values, settings = args
    pts = []
    for A in A_values:
        try:
            B = boundary_point(r, alpha, A, omega, s=settings).B
        except (NoSignChangeError, RuntimeError):
            continue
        pts.append([_round(A), _round(B)])
    return {"r": r, "alpha": "0" if alpha == 0.0 else "pi", "points": pts}


def _constriction_task(args) -> list[dict]:
    ell, omega, A_max, settings = args
    out = []
    for c in find_constrictions(ell, omega, (0.0, A_max), settings):
        out.append({"ell": ell, "A": _round(c.A), "B": _round(c.B), "residual": _round(c.residual),
                    "type": constriction_type(c, s=settings)})
    return out


def build_portrait(omega: float, r_max: int = 4, A_max: float = 10.0, n_A: int = 101,
                   workers: int = 1, s: OdeSettings = DEFAULT_SETTINGS) -> Portrait:
    """Boundary curves G_{r,0}, G_{r,pi} for r = 0..r_max on A in [0, A_max];
    negative r and negative A follow from the two reflection symmetries."""
    A_values = [_round(a) for a in np.linspace(0.0, A_max, n_A)]
    curve_jobs = [(r, alpha, omega, A_values, s) for r in range(r_max + 1) for alpha in (0.0, math.pi)]
    cons_jobs = [(ell, omega, A_max, s) for ell in range(r_max + 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            curves = list(ex.map(_curve_task, curve_jobs))
            cons_lists = list(ex.map(_constriction_task, cons_jobs))
    else:
        curves = [_curve_task(j) for j in curve_jobs]
        cons_lists = [_constriction_task(j) for j in cons_jobs]
    constrictions = sorted((c for lst in cons_lists for c in lst), key=lambda c: (c["ell"], c["A"]))
    growth = [{"r": r, "B": _round(growth_point(r, omega))} for r in range(1, r_max + 1)]
    meta = {
        "version": __version__,
        "rel_tol": s.rel_tol,
        "abs_tol": s.abs_tol,
        "n_A": n_A,
        "scan_step": scan_step(omega),
        "symmetry": "L_{-r} is the mirror of L_r in the A-axis; every L_r is symmetric in the B-axis",
    }
    return Portrait(_round(omega), r_max, _round(A_max), A_values, curves, growth, constrictions, meta)


def portrait_json(p: Portrait) -> str:
    return json.dumps(p.to_json(), indent=1, sort_keys=True) + "\n"


def portrait_csv(p: Portrait) -> str:
    lines = ["r,alpha,A,B"]
    for c in p.curves:
        for A, B in c["points"]:
            lines.append(f"{c['r']},{c['alpha']},{A!r},{B!r}")
    return "\n".join(lines) + "\n"


_PALETTE = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"]


def portrait_svg(p: Portrait) -> str:
    """1000x1000 drawing: B horizontal, A vertical, areas mirrored into B < 0 and A < 0."""
    size = 1000
    pad = 40
    bmax = max([abs(B) for c in p.curves for _, B in c["points"]] + [1.0]) * 1.05
    amax = max(p.A_max, 1e-9)

    def X(B: float) -> float:
        return pad + (B + bmax) / (2 * bmax) * (size - 2 * pad)

    def Y(A: float) -> float:
        return size - pad - (A + amax) / (2 * amax) * (size - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f"<title>phase-lock portrait omega={p.omega:g} ({SCHEMA})</title>",
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{pad}" y1="{Y(0):.2f}" x2="{size - pad}" y2="{Y(0):.2f}" stroke="black" stroke-width="1"/>',
        f'<line x1="{X(0):.2f}" y1="{pad}" x2="{X(0):.2f}" y2="{size - pad}" stroke="black" stroke-width="1"/>',
        f'<text x="{size - pad}" y="{Y(0) - 6:.2f}" font-size="14" text-anchor="end">B</text>',
        f'<text x="{X(0) + 6:.2f}" y="{pad + 12}" font-size="14">A</text>',
    ]
    for r in range(p.r_max + 1):
        color = _PALETTE[r % len(_PALETTE)]
        by_alpha = {c["alpha"]: c["points"] for c in p.curves if c["r"] == r}
        left = by_alpha.get("0", [])
        right = by_alpha.get("pi", [])
        for sb in ((1, -1) if r else (1,)):
            for sa in (1, -1):
                for pts in (left, right):
                    if len(pts) < 2:
                        continue
                    path = " ".join(f"{X(sb * B):.2f},{Y(sa * A):.2f}" for A, B in pts)
                    parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    for c in p.constrictions:
        for sb in ((1, -1) if c["ell"] else (1,)):
            for sa in (1, -1):
                parts.append(f'<circle cx="{X(sb * c["B"]):.2f}" cy="{Y(sa * c["A"]):.2f}" r="4" fill="black"/>')
    for g in p.growth_points:
        for sb in (1, -1):
            parts.append(f'<circle cx="{X(sb * g["B"]):.2f}" cy="{Y(0):.2f}" r="3" fill="red"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_portrait(p: Portrait, fmt: str, path: str) -> None:
    render = {"json": portrait_json, "csv": portrait_csv, "svg": portrait_svg}
    if fmt not in render:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render[fmt](p))
