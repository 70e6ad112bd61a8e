"""Parameter charts for the junction model.

Three coordinate systems are used throughout the package:

* ``PhysParams``: abscissa ``B``, ordinate ``A`` and frequency ``omega``;
* ``ReducedParams``: ``ell = B/omega``, ``mu = A/(2 omega)``, ``eta = 1/omega``,
  the coefficients of the torus equation
  ``dtheta/dtau = eta cos(theta) + ell + 2 mu cos(tau)``;
* ``HeunParams``: ``ell``, ``mu`` and ``lambda = 1/(4 omega^2) - mu^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class DomainError(ValueError):
    """Raised when parameters fall outside the model's domain."""


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class PhysParams:
    B: float
    A: float
    omega: float

    def __post_init__(self) -> None:
        _check_finite(B=self.B, A=self.A, omega=self.omega)
        if self.omega <= 0:
            raise DomainError(f"omega must be positive, got {self.omega}")

    def to_json(self) -> dict:
        return {"B": self.B, "A": self.A, "omega": self.omega}

    @classmethod
    def from_json(cls, d: dict) -> PhysParams:
        return cls(float(d["B"]), float(d["A"]), float(d["omega"]))


@dataclass(frozen=True)
class ReducedParams:
    ell: float
    mu: float
    eta: float

    def __post_init__(self) -> None:
        _check_finite(ell=self.ell, mu=self.mu, eta=self.eta)
        if self.eta < 0:
            raise DomainError(f"eta must be non-negative, got {self.eta}")

    def to_json(self) -> dict:
        return {"ell": self.ell, "mu": self.mu, "eta": self.eta}

    @classmethod
    def from_json(cls, d: dict) -> ReducedParams:
        return cls(float(d["ell"]), float(d["mu"]), float(d["eta"]))


@dataclass(frozen=True)
class HeunParams:
    ell: float
    mu: float
    lam: float

    def __post_init__(self) -> None:
        _check_finite(ell=self.ell, mu=self.mu, lam=self.lam)
        if self.lam + self.mu**2 <= 0:
            raise DomainError("lambda + mu^2 must be positive (it equals 1/(4 omega^2))")

    @property
    def omega(self) -> float:
        return 0.5 / math.sqrt(self.lam + self.mu**2)

    def to_json(self) -> dict:
        return {"ell": self.ell, "mu": self.mu, "lambda": self.lam}

    @classmethod
    def from_json(cls, d: dict) -> HeunParams:
        return cls(float(d["ell"]), float(d["mu"]), float(d["lambda"]))


def to_reduced(p: PhysParams) -> ReducedParams:
    return ReducedParams(ell=p.B / p.omega, mu=p.A / (2.0 * p.omega), eta=1.0 / p.omega)


def from_reduced(rp: ReducedParams) -> PhysParams:
    """Inverse of :func:`to_reduced`; requires ``eta > 0``."""
    if rp.eta <= 0:
        raise DomainError("eta must be positive to recover omega")
    omega = 1.0 / rp.eta
    return PhysParams(B=rp.ell * omega, A=2.0 * rp.mu * omega, omega=omega)


def to_heun(p: PhysParams) -> HeunParams:
    mu = p.A / (2.0 * p.omega)
    return HeunParams(ell=p.B / p.omega, mu=mu, lam=1.0 / (4.0 * p.omega**2) - mu**2)


def heun_from_reduced(rp: ReducedParams) -> HeunParams:
    return HeunParams(ell=rp.ell, mu=rp.mu, lam=rp.eta**2 / 4.0 - rp.mu**2)
