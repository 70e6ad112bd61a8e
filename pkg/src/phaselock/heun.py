"""Power series of the special double confluent Heun equation

    z^2 E'' + ((l+1) z + mu (1 - z^2)) E' + (lam - mu (l+1) z) E = 0

and of its conjugate (l -> -l).  Collecting z^k gives

    [k(k+l) + lam] a_k + mu (k+1) a_{k+1} - mu (k+l) a_{k-1} = 0,

with l replaced by -l for the conjugate equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .params import HeunParams

RESCALE_ABOVE = 1e100
SCORE_THRESHOLD = 0.5
UNCERTAIN_BAND = (0.25, 0.75)
# |c| is reported in units of this relative scale
ENTIRE_SCALE = 1e-6


class HeunPivotError(ValueError):
    """mu = 0 makes the recurrence singular."""


@dataclass(frozen=True)
class HeunSeries:
    """Coefficients a_k = mantissa_k * exp(log_scale_k)."""

    mantissa: np.ndarray
    log_scale: np.ndarray
    equation: str
    hp: HeunParams

    @property
    def coeffs(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.mantissa * np.exp(self.log_scale)

    @property
    def degree(self) -> int:
        return self.mantissa.size - 1


def _signed_ell(hp: HeunParams, equation: str) -> float:
    if equation not in ("direct", "conjugate"):
        raise ValueError("equation must be 'direct' or 'conjugate'")
    return hp.ell if equation == "direct" else -hp.ell


def _forward(hp: HeunParams, l: float, start: tuple[complex, complex], n: int,
             companion: tuple[complex, complex] | None = None):
    """Run the recurrence from (a0, a1); optional companion solution shares the rescaling."""
    mu, lam = hp.mu, hp.lam
    a = np.zeros(n + 1, dtype=complex)
    b = np.zeros(n + 1, dtype=complex)
    logs = np.zeros(n + 1)
    a[0] = start[0]
    if companion is not None:
        b[0] = companion[0]
    if n >= 1:
        a[1] = start[1]
        if companion is not None:
            b[1] = companion[1]
    shift = 0.0
    for k in range(1, n):
        diag = k * (k + l) + lam
        sub = mu * (k + l)
        sup = mu * (k + 1)
        a[k + 1] = -(diag * a[k] - sub * a[k - 1]) / sup
        b[k + 1] = -(diag * b[k] - sub * b[k - 1]) / sup
        logs[k + 1] = shift
        big = max(abs(a[k + 1]), abs(b[k + 1]), abs(a[k]), abs(b[k]))
        if big > RESCALE_ABOVE or (0 < big < 1.0 / RESCALE_ABOVE):
            # rescale the two most recent terms; earlier ones keep their own log scale
            a[k] /= big
            a[k + 1] /= big
            b[k] /= big
            b[k + 1] /= big
            shift += math.log(big)
            logs[k] = shift
            logs[k + 1] = shift
    return a, b, logs


def heun_series(hp: HeunParams, N: int, equation: str = "direct") -> HeunSeries:
    """Formal power series solution with a_0 = 1 truncated at degree N."""
    if hp.mu == 0:
        raise HeunPivotError("mu = 0: recurrence pivot vanishes")
    if N < 1:
        raise ValueError("N must be at least 1")
    l = _signed_ell(hp, equation)
    a, _, logs = _forward(hp, l, (1.0, -hp.lam / hp.mu), N)
    return HeunSeries(a, logs, equation, hp)


def recurrence_residual(series: HeunSeries) -> float:
    """max_k |recurrence residual| / (sum of term magnitudes), k = 0..N-1."""
    hp = series.hp
    l = _signed_ell(hp, series.equation)
    m, L = series.mantissa, series.log_scale
    worst = 0.0
    for k in range(series.degree):
        # express the three neighbours on the log scale of index k
        prev = m[k - 1] * math.exp(L[k - 1] - L[k]) if k > 0 else 0.0
        nxt = m[k + 1] * math.exp(L[k + 1] - L[k])
        terms = [(k * (k + l) + hp.lam) * m[k], hp.mu * (k + 1) * nxt, -hp.mu * (k + l) * prev]
        scale = sum(abs(t) for t in terms)
        if scale > 0:
            worst = max(worst, abs(sum(terms)) / scale)
    return worst


def ode_residual(series: HeunSeries, z: complex) -> tuple[float, float]:
    """Differential operator applied to the truncated series at z, with the two
    unavoidable truncation terms (z^N and z^{N+1}) removed.

    Returns (residual, scale) where scale is the sum of the magnitudes of the
    individual operator terms; the formal series at the irregular point 0 is
    generically divergent, so the raw truncation residual is not small."""
    hp = series.hp
    l = _signed_ell(hp, series.equation)
    if series.degree > 150:
        raise ValueError("direct evaluation limited to degree 150")
    a = series.coeffs
    N = series.degree
    poly = np.polynomial.Polynomial(a)
    E, dE, d2E = poly(z), poly.deriv(1)(z), poly.deriv(2)(z)
    parts = [z * z * d2E, ((l + 1) * z + hp.mu * (1 - z * z)) * dE, (hp.lam - hp.mu * (l + 1) * z) * E]
    total = sum(parts)
    # z^N coefficient lacks mu (N+1) a_{N+1}; z^{N+1} coefficient is -mu (N+1+l) a_N
    a_next = -((N * (N + l) + hp.lam) * a[N] - hp.mu * (N + l) * a[N - 1]) / (hp.mu * (N + 1))
    boundary = -hp.mu * (N + 1) * a_next * z**N - hp.mu * (N + 1 + l) * a[N] * z ** (N + 1)
    scale = sum(abs(p) for p in parts) + abs(boundary)
    return float(abs(total - boundary)), float(scale)


def certify_series(series: HeunSeries, n_points: int = 20, radius: float = 0.5) -> float:
    """Largest scaled operator residual over points spread in |z| <= radius."""
    k = np.arange(n_points)
    pts = radius * np.sqrt((k + 0.5) / n_points) * np.exp(2j * np.pi * k * 0.6180339887498949)
    worst = 0.0
    for z in pts:
        r, s = ode_residual(series, complex(z))
        worst = max(worst, r / s if s > 0 else r)
    return worst


def dominant_weight(hp: HeunParams, N: int = 200) -> complex:
    """Weight c in a = m + c d, where m is the minimal solution of the
    recurrence for k >= 1 and d starts (d0, d1) = (0, 1).  The series is
    entire exactly when c = 0.  Estimated as a_N / d_N."""
    if hp.mu == 0:
        raise HeunPivotError("mu = 0: recurrence pivot vanishes")
    a, d, _ = _forward(hp, hp.ell, (1.0, -hp.lam / hp.mu), N, companion=(0.0, 1.0))
    return complex(a[N] / d[N])


def entire_solution_score(hp: HeunParams, N: int = 200) -> float:
    """Size of the dominant (factorially growing) component of the series,
    in units of ENTIRE_SCALE * (1 + |a_1|): max over N/2 <= k <= N of |a_k/d_k|.

    Small values (below SCORE_THRESHOLD) indicate an entire solution."""
    if hp.mu == 0:
        raise HeunPivotError("mu = 0: recurrence pivot vanishes")
    a1 = -hp.lam / hp.mu
    a, d, _ = _forward(hp, hp.ell, (1.0, a1), N, companion=(0.0, 1.0))
    ks = range(max(2, N // 2), N + 1)
    ratio = max(abs(a[k] / d[k]) for k in ks if d[k] != 0)
    return float(ratio / (ENTIRE_SCALE * (1.0 + abs(a1))))


def entire_verdict(score: float) -> str:
    lo, hi = UNCERTAIN_BAND
    if lo <= score <= hi:
        return "uncertain"
    return "entire" if score < SCORE_THRESHOLD else "not-entire"


def conjugate_poly_determinant(ell: int, lam: float, mu: float) -> float:
    """Determinant of the ell x ell tridiagonal system for polynomial solutions
    of degree <= ell-1 of the conjugate equation (closure a_ell = 0).

    Rows k = 0..ell-1: diagonal k(k-ell)+lam, super mu(k+1), sub mu(ell-k); continuant
    D_{k+1} = d_k D_k - mu^2 k (ell-k) D_{k-1}."""
    if int(ell) != ell or ell < 1:
        raise ValueError("ell must be a positive integer")
    ell = int(ell)
    prev, cur = 1.0, lam
    for k in range(1, ell):
        prev, cur = cur, (k * (k - ell) + lam) * cur - mu * mu * k * (ell - k) * prev
    return float(cur)


def tridiagonal_matrix(ell: int, lam: float, mu: float) -> np.ndarray:
    m = np.zeros((ell, ell))
    for k in range(ell):
        m[k, k] = k * (k - ell) + lam
        if k + 1 < ell:
            m[k, k + 1] = mu * (k + 1)
        if k > 0:
            m[k, k - 1] = mu * (ell - k)
    return m


@dataclass(frozen=True)
class SpectralSample:
    ell: int
    mu: float
    lam: float
    det_value: float
    omega: float

    @property
    def A(self) -> float:
        return 2.0 * self.omega * self.mu

    def to_row(self) -> dict:
        return {"ell": self.ell, "omega": self.omega, "mu": self.mu, "lambda": self.lam, "A": self.A}


def spectral_scan(ell: int, omega: float, mu_max: float, n_grid: int = 4000) -> list[SpectralSample]:
    """Roots mu in (0, mu_max] of the determinant on lambda = 1/(4 omega^2) - mu^2."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    base = 1.0 / (4.0 * omega**2)

    def f(mu: float) -> float:
        return conjugate_poly_determinant(ell, base - mu * mu, mu)

    grid = np.linspace(0.0, mu_max, n_grid + 1)[1:]
    vals = np.array([f(m) for m in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(grid[i])
        elif vals[i] * vals[i + 1] < 0:
            roots.append(brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15, maxiter=200))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    return [SpectralSample(ell, float(m), base - m * m, f(m), omega) for m in roots]


def spectral_csv(samples: list[SpectralSample]) -> str:
    lines = ["ell,omega,mu,lambda,A"]
    for smp in samples:
        row = smp.to_row()
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                              for k in ("ell", "omega", "mu", "lambda", "A")))
    return "\n".join(lines) + "\n"
