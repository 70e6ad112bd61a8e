"""Linear systems dY/dz = (K2/z^2 + K1/z + K0) Y with irregular singular
points of Poincare rank one at 0 and infinity.

Eigenvalues of main-term matrices are ordered ascending by real part, then
by imaginary part; this ordering fixes the numbering of the formal
solutions, q-points and formal residues everywhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrate import DEFAULT_SETTINGS, OdeSettings, PathInCStar, flow_linear, transport
from .params import ReducedParams


class DegenerateSingularityError(ValueError):
    """Main term at a singular point has a repeated eigenvalue."""


class DecompositionUndefinedError(ValueError):
    """A pivot of the triangular factorization vanishes."""


class QPointError(RuntimeError):
    """Canonical sectorial solutions could not be computed."""


@dataclass(frozen=True)
class LinearSystem:
    K2: np.ndarray
    K1: np.ndarray
    K0: np.ndarray

    def __post_init__(self) -> None:
        for name in ("K2", "K1", "K0"):
            m = np.array(getattr(self, name), dtype=complex)
            if m.shape != (2, 2) or not np.all(np.isfinite(m)):
                raise ValueError(f"{name} must be a finite 2x2 matrix")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    def main_term(self, at: str) -> np.ndarray:
        return self.K2 if at == "0" else self.K0

    def is_nonresonant(self, tol: float = 1e-14) -> bool:
        return all(_gap(self.main_term(p)) > tol for p in ("0", "inf"))

    def conjugate_by(self, G) -> LinearSystem:
        """Constant gauge transform Y -> G^{-1} Y."""
        G = np.asarray(G, dtype=complex)
        Gi = np.linalg.inv(G)
        return LinearSystem(Gi @ self.K2 @ G, Gi @ self.K1 @ G, Gi @ self.K0 @ G)

    def coefficient(self, z: complex) -> np.ndarray:
        return self.K2 / z**2 + self.K1 / z + self.K0


def _gap(m: np.ndarray) -> float:
    ev = np.linalg.eigvals(m)
    return abs(ev[0] - ev[1])


def build_josephson_system(rp: ReducedParams) -> LinearSystem:
    """The linear system whose projectivization is the torus equation."""
    if rp.eta <= 0:
        raise ValueError("eta must be positive")
    if rp.mu == 0:
        raise DegenerateSingularityError("mu = 0 makes the singular points degenerate")
    return josephson_coefficients(rp)


def josephson_coefficients(rp: ReducedParams) -> LinearSystem:
    """Same coefficients without the nonresonance check (used for rotation numbers at A = 0)."""
    diag = np.diag([-rp.mu, 0.0]).astype(complex)
    k1 = np.array([[-rp.ell, -rp.eta / 2.0], [rp.eta / 2.0, 0.0]], dtype=complex)
    return LinearSystem(diag, k1, diag)


def monodromy_matrix(sys: LinearSystem, s: OdeSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Analytic continuation along the counterclockwise unit circle from z = 1."""
    return flow_linear(sys, PathInCStar.unit_circle(), s)


def triviality_defect(M: np.ndarray) -> float:
    return float(np.linalg.norm(M - np.eye(2), "fro"))


def is_monodromy_trivial(sys: LinearSystem, tol: float = 1e-7, s: OdeSettings = DEFAULT_SETTINGS) -> bool:
    return triviality_defect(monodromy_matrix(sys, s)) < tol


def ordered_eigen(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ascending by (real, imag) and matching eigenvector columns."""
    vals, vecs = np.linalg.eig(np.asarray(m, dtype=complex))
    if abs(vals[0] - vals[1]) <= 1e-14 * max(1.0, abs(vals[0]), abs(vals[1])):
        raise DegenerateSingularityError("main term has a repeated eigenvalue")
    order = sorted(range(2), key=lambda k: (round(vals[k].real, 12), vals[k].imag))
    vals = vals[order]
    vecs = vecs[:, order]
    # deterministic normalization: unit columns whose largest entry is real positive
    for k in range(2):
        col = vecs[:, k]
        j = int(np.argmax(np.abs(col)))
        vecs[:, k] = col / (col[j] / abs(col[j])) / np.linalg.norm(col)
    return vals, vecs


def formal_residue(sys: LinearSystem, at: str) -> np.ndarray:
    """Diagonal part of H^{-1} K1 H where H diagonalizes the main term at ``at``."""
    if at not in ("0", "inf"):
        raise ValueError("at must be '0' or 'inf'")
    _, H = ordered_eigen(sys.main_term(at))
    return np.diag(np.diag(np.linalg.solve(H, sys.K1 @ H)))


# ---------------------------------------------------------------- Stokes factors

@dataclass(frozen=True)
class StokesDecomposition:
    m_norm: np.ndarray
    c0: complex
    c1: complex
    upper_first: bool = True

    def reconstruct(self) -> np.ndarray:
        C0i = np.array([[1, -self.c0], [0, 1]], dtype=complex)
        C1i = np.array([[1, 0], [-self.c1, 1]], dtype=complex)
        if self.upper_first:
            return self.m_norm @ C1i @ C0i
        return self.m_norm @ C0i @ C1i


def stokes_from_monodromy(M, upper_first: bool = True, tol: float = 1e-10) -> StokesDecomposition:
    """Split M = M_norm C1^{-1} C0^{-1} (or M_norm C0^{-1} C1^{-1} when ``upper_first`` is false)
    with C0 upper and C1 lower unipotent."""
    M = np.asarray(M, dtype=complex)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    scale = max(1.0, float(np.abs(M).max()))
    if upper_first:
        if abs(M[0, 0]) <= tol * scale:
            raise DecompositionUndefinedError("M11 vanishes")
        m1 = M[0, 0]
        c0 = -M[0, 1] / m1
        m2 = det / m1
        if abs(m2) <= tol * scale:
            raise DecompositionUndefinedError("second formal monodromy vanishes")
        c1 = -M[1, 0] / m2
    else:
        if abs(M[1, 1]) <= tol * scale:
            raise DecompositionUndefinedError("M22 vanishes")
        m2 = M[1, 1]
        c1 = -M[1, 0] / m2
        m1 = det / m2
        if abs(m1) <= tol * scale:
            raise DecompositionUndefinedError("first formal monodromy vanishes")
        c0 = -M[0, 1] / m1
    out = StokesDecomposition(np.diag([m1, m2]), complex(c0), complex(c1), upper_first)
    resid = np.abs(out.reconstruct() - M).max()
    if resid > max(tol, 1e-10) * scale * max(1.0, abs(c0) * abs(c1)):
        raise DecompositionUndefinedError(f"reconstruction residual {resid:.3e}")
    return out


# ---------------------------------------------------------------- q-points

INF = complex("inf")


@dataclass(frozen=True)
class MonodromyStokesData:
    """Projections of the canonical sectorial solutions at the base point z0
    (order q10, q20, q1inf, q2inf) plus the monodromy matrix.

    Each q-point is kept as a homogeneous vector (u, v); the sphere point is
    v/u (infinite when u = 0)."""

    vectors: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    M: np.ndarray
    base_point: complex = 1.0

    @property
    def q(self) -> tuple[complex, complex, complex, complex]:
        return tuple(_project(v) for v in self.vectors)

    def to_json(self) -> dict:
        def pair(c: complex):
            if not np.isfinite(c):
                return None
            return [float(c.real), float(c.imag)]

        return {
            "q": [pair(c) for c in self.q],
            "M": [[pair(self.M[i, j]) for j in range(2)] for i in range(2)],
            "base_point": pair(complex(self.base_point)),
        }


def _project(v: np.ndarray) -> complex:
    u, w = complex(v[0]), complex(v[1])
    if abs(u) <= 1e-300 or abs(u) < 1e-14 * abs(w):
        return INF
    return w / u


def _seed_eps(gap: float) -> float:
    return min(0.05, gap / 40.0)


def _segments(a: float, b: float, gap: float, at: str, budget: float = 40.0) -> list[tuple[float, float]]:
    """Split the radial segment a -> b so that the relative growth of the
    formal exponentials over each piece stays below e^budget."""
    if at == "0":
        # exponent gap/r
        lo, hi = 1.0 / b, 1.0 / a
        n = max(1, math.ceil(gap * abs(hi - lo) / budget))
        inv = np.linspace(1.0 / a, 1.0 / b, n + 1)
        pts = 1.0 / inv
    else:
        n = max(1, math.ceil(gap * abs(b - a) / budget))
        pts = np.linspace(a, b, n + 1)
    pts[0], pts[-1] = a, b
    return list(zip(pts[:-1], pts[1:]))


def _carry(sys: LinearSystem, paths: list[PathInCStar], v: np.ndarray, s: OdeSettings) -> np.ndarray:
    for path in paths:
        v = transport(sys.K2, sys.K1, sys.K0, path, v, s)[:, 0]
        v = v / np.linalg.norm(v)
    return v


def _sector_paths(radial_from: float, angle: float, gap: float, at: str, s_end_on_circle: bool) -> list[PathInCStar]:
    segs = [PathInCStar("radial", a, b, 1.0, angle) for a, b in _segments(radial_from, 1.0, gap, at)]
    if s_end_on_circle:
        segs.append(PathInCStar("arc", math.pi, 0.0, 1.0, 0.0))
    return segs


def _canonical_direction(sys: LinearSystem, at: str, k: int, s: OdeSettings) -> np.ndarray:
    vals, H = ordered_eigen(sys.main_term(at))
    diff = vals[1] - vals[0]
    if abs(diff.imag) > 1e-9 * max(1.0, abs(diff)):
        raise QPointError("eigenvalue difference is not real; sectorial scheme unsupported")
    gap = abs(diff.real)
    eps = _seed_eps(gap)
    j = 1 - k
    Rt = np.linalg.solve(H, sys.K1 @ H)
    if at == "0":
        # solution k behaves like exp(-lambda_k / z): recessive on z > 0 iff lambda_k > lambda_j
        positive = vals[k].real > vals[j].real
        h1 = Rt[j, k] / (vals[k] - vals[j])
        small = eps
        start = eps
    else:
        # solution k behaves like exp(nu_k z): recessive on z > 0 iff nu_k < nu_j
        positive = vals[k].real < vals[j].real
        h1 = Rt[j, k] / (vals[k] - vals[j])
        small = eps
        start = 1.0 / eps
    local = np.zeros(2, dtype=complex)
    local[k] = 1.0
    # first-order formal correction in the local variable (z at 0, 1/z at infinity), signed by the ray
    sign = 1.0 if positive else -1.0
    local[j] = h1 * small * sign
    seed = H @ local
    angle = 0.0 if positive else math.pi
    paths = _sector_paths(start, angle, gap, at, not positive)
    v = _carry(sys, paths, seed, s)
    if not np.all(np.isfinite(v)):
        raise QPointError("integration of canonical solution failed")
    return v


def q_points(sys: LinearSystem, s: OdeSettings = DEFAULT_SETTINGS) -> MonodromyStokesData:
    """q-points at the base point z0 = 1 for the sector containing the upper half-plane."""
    vecs = tuple(
        _canonical_direction(sys, at, k, s) for at, k in (("0", 0), ("0", 1), ("inf", 0), ("inf", 1))
    )
    return MonodromyStokesData(vecs, monodromy_matrix(sys, s), 1.0)


def _det(a: np.ndarray, b: np.ndarray) -> complex:
    return complex(a[0] * b[1] - a[1] * b[0])


def cross_ratio_of(data: MonodromyStokesData) -> complex:
    """(q10-q1inf)(q20-q2inf) / ((q10-q2inf)(q20-q1inf)) in homogeneous form."""
    q10, q20, q1i, q2i = data.vectors
    num = _det(q10, q1i) * _det(q20, q2i)
    den = _det(q10, q2i) * _det(q20, q1i)
    scale = np.prod([np.linalg.norm(v) for v in data.vectors])
    if abs(den) <= 1e-14 * scale:
        return INF
    return num / den


def transition_cross_ratio(sys: LinearSystem, s: OdeSettings = DEFAULT_SETTINGS) -> complex:
    return cross_ratio_of(q_points(sys, s))
