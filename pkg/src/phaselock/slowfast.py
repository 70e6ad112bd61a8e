"""Slow curve cos(theta) + B + A cos(tau) = 0 and the small-omega monotonicity check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrate import DEFAULT_SETTINGS, OdeSettings, flow_theta_many, torus_args
from .params import PhysParams, to_reduced

CONVEX = "ConvexContractible"
SINGULAR = "SingularCross"
TWO_COMPONENTS = "TwoComponents"
DEGENERATE = "Degenerate"
LOCUS_TOL = 1e-12


class EmptyCurveError(ValueError):
    pass


@dataclass(frozen=True)
class SlowCurveClass:
    label: str
    B: float
    A: float


@dataclass(frozen=True)
class AlphaFamily:
    ell: int
    alpha: float
    omega: float

    @property
    def A(self) -> float:
        return 1.0 + (self.ell - self.alpha) * self.omega

    @property
    def B(self) -> float:
        return self.ell * self.omega

    def params(self) -> PhysParams:
        return PhysParams(self.B, self.A, self.omega)


def slow_function(theta, tau, B: float, A: float):
    return np.cos(theta) + B + A * np.cos(tau)


def classify_slow_curve(B: float, A: float) -> SlowCurveClass:
    if not (B > 0 and A > 0):
        raise ValueError("B and A must be positive")
    if abs(A - (1.0 - B)) <= LOCUS_TOL:
        label = SINGULAR
    elif abs(1.0 - B) < A < 1.0 + B:
        label = CONVEX
    elif A < 1.0 - B:
        label = TWO_COMPONENTS
    else:
        # A >= 1 + B, or B > 1 with A <= B - 1 (empty or a single point)
        label = DEGENERATE
    return SlowCurveClass(label, B, A)


def convexity_certificate(B: float, A: float) -> float:
    """Minimum over [-1, 1] of A B v^2 + (A^2 + B^2 - 1) v + A B."""
    a, b, c = A * B, A * A + B * B - 1.0, A * B
    cands = [-1.0, 1.0]
    if a != 0:
        v = -b / (2 * a)
        if -1.0 < v < 1.0:
            cands.append(v)
    return min(a * v * v + b * v + c for v in cands)


def _bisect_cos(target: float) -> float:
    """theta in [0, pi] with cos(theta) = target, by bisection."""
    lo, hi = 0.0, math.pi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if math.cos(mid) > target:
            lo = mid
        else:
            hi = mid
    return lo if abs(math.cos(lo) - target) <= abs(math.cos(hi) - target) else hi


def slow_curve_points(B: float, A: float, n: int = 256) -> list[tuple[float, float]]:
    """Points (theta, tau) of the slow curve over n equally spaced tau values."""
    pts: list[tuple[float, float]] = []
    for j in range(n):
        tau = 2.0 * math.pi * j / n
        c = -(B + A * math.cos(tau))
        if abs(c) > 1.0:
            continue
        th = _bisect_cos(c)
        pts.append((th, tau))
        other = 2.0 * math.pi - th
        if other < 2.0 * math.pi and abs(other - th) > 0:
            pts.append((other, tau))
    if not pts:
        raise EmptyCurveError(f"slow curve is empty for B={B}, A={A}")
    return pts


def slow_curve_svg(B: float, A: float, n: int = 400, size: int = 600) -> str:
    """SVG of the slow curve over the fundamental square (theta horizontal, tau vertical)."""
    pts = slow_curve_points(B, A, n)
    scale = size / (2.0 * math.pi)
    label = classify_slow_curve(B, A).label
    dots = "\n".join(
        f'<circle cx="{th * scale:.3f}" cy="{size - tau * scale:.3f}" r="1.5" fill="#1f4e9e"/>' for th, tau in pts
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white" stroke="black"/>\n'
        f"<title>slow curve B={B:g} A={A:g} ({label})</title>\n{dots}\n</svg>\n"
    )


@dataclass(frozen=True)
class MonotonicityResult:
    holds: bool
    margin: float


def monotonicity_check(ell: int, alpha1: float, alpha2: float, omega: float, grid=None,
                       s: OdeSettings = DEFAULT_SETTINGS) -> MonotonicityResult:
    """Compare lifted period maps at A_alpha1 and A_alpha2 on B = ell omega.

    ``margin`` is min over the grid of P_1 - P_2; ``holds`` means it is positive."""
    if grid is None:
        grid = np.linspace(0.0, 2.0 * math.pi, 128, endpoint=False)
    grid = np.asarray(grid, dtype=float)
    maps = []
    for alpha in (alpha1, alpha2):
        rp = to_reduced(AlphaFamily(ell, alpha, omega).params())
        maps.append(flow_theta_many(torus_args(rp), grid, 0.0, 2.0 * math.pi, s))
    gap = maps[0] - maps[1]
    margin = float(gap.min())
    return MonotonicityResult(bool(margin > 0), margin)
