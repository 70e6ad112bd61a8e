import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from phaselock.integrate import (
    IntegrationBudgetError,
    OdeSettings,
    PathInCStar,
    flow_linear,
    flow_theta,
    flow_theta_many,
    flow_variational,
    solve_dense,
    torus_args,
)
from phaselock import fields
from phaselock.monodromy import LinearSystem
from phaselock.params import ReducedParams

TWO_PI = 2 * math.pi


def test_exact_flow_at_zero_eta():
    assert flow_theta(ReducedParams(1, 0.3, 0), 0.0, 0.0, TWO_PI) == pytest.approx(TWO_PI, abs=1e-10)
    assert flow_theta(ReducedParams(0, 0, 0), 0.7, 0.0, 5.0) == pytest.approx(0.7, abs=1e-15)


def test_matches_scipy_reference():
    rp = ReducedParams(1, 0.5, 0.8)
    ours = flow_theta(rp, 1.0, 0.0, TWO_PI)
    ref = solve_ivp(lambda t, y: [rp.eta * math.cos(y[0]) + rp.ell + 2 * rp.mu * math.cos(t)], (0, TWO_PI), [1.0],
                    method="DOP853", rtol=1e-13, atol=1e-13).y[0, -1]
    assert ours == pytest.approx(ref, abs=1e-9)
    tighter = flow_theta(rp, 1.0, 0.0, TWO_PI, OdeSettings(1e-13, 1e-15))
    assert abs(ours - tighter) < 10 * 1e-10 * max(1.0, abs(tighter))


def test_monotone_and_equivariant():
    rp = ReducedParams(0.4, 0.9, 1.3)
    grid = np.linspace(0, TWO_PI, 40)
    out = flow_theta_many(torus_args(rp), grid, 0.0, TWO_PI)
    assert np.all(np.diff(out) > 0)
    shifted = flow_theta_many(torus_args(rp), grid + TWO_PI, 0.0, TWO_PI)
    assert np.max(np.abs(shifted - out - TWO_PI) / np.maximum(1.0, np.abs(shifted))) < 1e-10


def test_batch_matches_single():
    rp = ReducedParams(1.2, 0.4, 0.6)
    grid = np.array([0.0, 1.0, 2.5])
    out = flow_theta_many(torus_args(rp), grid, 0.0, 3.0)
    for th, v in zip(grid, out):
        assert v == pytest.approx(flow_theta(rp, th, 0.0, 3.0), abs=1e-13)


def test_budget_error():
    with pytest.raises(IntegrationBudgetError):
        flow_theta(ReducedParams(1, 1, 1), 0.0, 0.0, 100.0, OdeSettings(max_evals=50))


def test_settings_validation():
    with pytest.raises(ValueError):
        OdeSettings(rel_tol=0.0)
    with pytest.raises(ValueError):
        OdeSettings(abs_tol=0.1)
    with pytest.raises(ValueError):
        OdeSettings(max_evals=0)


def test_dense_output_accuracy():
    rp = ReducedParams(1, 0.5, 0.8)
    sol = solve_dense(fields.TORUS, 0.0, TWO_PI, np.array([0.3]), torus_args(rp), OdeSettings(1e-12, 1e-14))
    for t in (0.37, 2.0, 5.5):
        assert sol(t)[0] == pytest.approx(flow_theta(rp, 0.3, 0.0, t, OdeSettings(1e-12, 1e-14)), abs=1e-9)


def test_linear_zero_and_diagonal():
    zero = LinearSystem(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
    assert np.allclose(flow_linear(zero, PathInCStar.unit_circle()), np.eye(2), atol=1e-14)
    ell, mu = 0.3, 0.7
    diag = LinearSystem(np.diag([-mu, 0]), np.diag([-ell, 0]), np.diag([-mu, 0]))
    M = flow_linear(diag, PathInCStar.unit_circle())
    assert M[0, 0] == pytest.approx(np.exp(-2j * np.pi * ell), abs=1e-10)
    assert M[1, 1] == pytest.approx(1.0, abs=1e-12)
    assert abs(M[0, 1]) + abs(M[1, 0]) < 1e-12
    # half circle: explicit scalar solution exp(-mu(z - 1/z)... ) integrated in closed form
    half = flow_linear(diag, PathInCStar.unit_circle(0, math.pi))
    z = -1.0
    expect = np.exp(mu * (1 / z - 1) - ell * 1j * math.pi - mu * (z - 1))
    assert half[0, 0] == pytest.approx(expect, abs=1e-10)


def test_liouville_and_composition():
    rng = np.random.default_rng(7)
    K2, K1, K0 = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3))
    sys = LinearSystem(0.3 * K2, K1, 0.3 * K0)
    full = flow_linear(sys, PathInCStar.unit_circle())
    assert np.linalg.det(full) == pytest.approx(np.exp(2j * np.pi * np.trace(sys.K1)), rel=1e-10)
    a = flow_linear(sys, PathInCStar.unit_circle(0, math.pi))
    b = flow_linear(sys, PathInCStar.unit_circle(math.pi, 2 * math.pi))
    assert np.max(np.abs(b @ a - full)) < 1e-9
    path = PathInCStar("radial", 0.5, 2.0, angle=0.3)

    def tr(r):
        z = r * np.exp(0.3j)
        return np.trace(sys.K2 / z**2 + sys.K1 / z + sys.K0) * np.exp(0.3j)

    re = quad(lambda r: tr(r).real, 0.5, 2.0, epsabs=1e-14)[0]
    im = quad(lambda r: tr(r).imag, 0.5, 2.0, epsabs=1e-14)[0]
    assert np.linalg.det(flow_linear(sys, path)) == pytest.approx(np.exp(re + 1j * im), rel=1e-10)


def test_path_validation():
    with pytest.raises(ValueError):
        PathInCStar("radial", 0.0, 1.0)
    with pytest.raises(ValueError):
        PathInCStar("spiral", 0.0, 1.0)
    with pytest.raises(ValueError):
        PathInCStar("arc", 0.0, math.inf)


def test_variational_closed_forms():
    res = flow_variational(ReducedParams(1, 0, 0), 0.0, math.pi / 2)
    assert res.d_eta == pytest.approx(1.0, abs=1e-9)
    res = flow_variational(ReducedParams(1, 0, 0), 0.4, math.pi)
    assert res.d_mu == pytest.approx(0.0, abs=1e-9)
    for ell in (1, 2, 3):
        for th0 in (0.0, 1.1):
            assert flow_variational(ReducedParams(ell, 0, 0), th0, TWO_PI).d2_eta == pytest.approx(
                -TWO_PI / ell, abs=1e-8)


def test_variational_rejects_bad_base():
    with pytest.raises(ValueError):
        flow_variational(ReducedParams(0, 0, 0), 0.0, 1.0)
    with pytest.raises(ValueError):
        flow_variational(ReducedParams(1.5, 0, 0), 0.0, 1.0)
    with pytest.raises(ValueError):
        flow_variational(ReducedParams(1, 0.1, 0), 0.0, 1.0)
