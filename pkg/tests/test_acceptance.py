"""Acceptance criteria 1-16, one test each; tolerances and runtime limits are pinned here."""

import functools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from phaselock.heun import SCORE_THRESHOLD, entire_solution_score, spectral_scan
from phaselock.integrate import OdeSettings, flow_theta, flow_variational
from phaselock.isomono import (
    detect_jos_crossing,
    dyn_foliation_flow,
    embed_josephson,
    isoflow_normalized,
    josephson_return_map,
    josephson_state,
    max_structure_drift,
    normalized_from_chart,
    p3_residual,
    sample_w,
)
from phaselock.monodromy import (
    build_josephson_system,
    formal_residue,
    monodromy_matrix,
    triviality_defect,
)
from phaselock.params import PhysParams, ReducedParams, to_heun, to_reduced
from phaselock.poincare import displacement_sup, rotation_number
from phaselock.portrait import (
    GRID64,
    align_search,
    build_portrait,
    constriction_type,
    defect_profile,
    find_constrictions,
    locate_growth_by_rotation,
    asymptotic_error,
    portrait_json,
    scan_step,
)
from phaselock.heun import conjugate_poly_determinant
from phaselock.slowfast import CONVEX, TWO_COMPONENTS, classify_slow_curve, convexity_certificate, \
    monotonicity_check, slow_curve_points

TWO_PI = 2 * math.pi
TIGHT = OdeSettings(rel_tol=1e-12, abs_tol=1e-14)
FIXTURES = Path(__file__).parent / "fixtures"


class Clock:
    def __init__(self):
        self.start = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start


@functools.lru_cache(maxsize=None)
def constrictions(ell: int, omega: float, a_lo: float, a_hi: float):
    return tuple(find_constrictions(ell, omega, (a_lo, a_hi)))


def test_criterion_01_exact_flow(record_property):
    clock = Clock()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        ell, mu = rng.uniform(-3, 3), rng.uniform(0, 3)
        th0, tau = rng.uniform(-np.pi, np.pi), rng.uniform(0, 4 * np.pi)
        got = flow_theta(ReducedParams(ell, mu, 0.0), th0, 0.0, tau, TIGHT)
        worst = max(worst, abs(got - (th0 + ell * tau + 2 * mu * math.sin(tau))))
    record_property("max_error", f"{worst:.2e}")
    record_property("seconds", f"{clock.elapsed:.2f}")
    assert worst < 1e-10
    assert clock.elapsed < 1.0


def _theta_signed_eta(ell: float, eta: float, th0: float, tau: float) -> float:
    # shifting theta by pi flips the sign of eta cos(theta)
    if eta >= 0:
        return flow_theta(ReducedParams(ell, 0.0, eta), th0, 0.0, tau, TIGHT)
    return flow_theta(ReducedParams(ell, 0.0, -eta), th0 + math.pi, 0.0, tau, TIGHT) - math.pi


def _mixed_closed_form(k: int, ell: int, th0: float, tau: float) -> float:
    def s_k(y):
        return (-1) ** (k // 2) * math.cos(y) if k % 2 == 0 else (-1) ** ((k + 1) // 2) * math.sin(y)

    return quad(lambda x: 2**k * s_k(th0 + ell * x) * math.sin(x) ** k, 0.0, tau, epsabs=1e-13, epsrel=1e-13,
                limit=200)[0]


def test_criterion_02_variational(record_property):
    clock = Clock()
    closed_err, fd_err = 0.0, 0.0
    for ell in (1, 2, 3):
        for th0, tau in ((0.3, 1.7), (-1.2, TWO_PI), (2.5, 4.0)):
            res = flow_variational(ReducedParams(ell, 0.0, 0.0), th0, tau, TIGHT)
            y, y0 = th0 + ell * tau, th0
            d_eta = (math.sin(y) - math.sin(y0)) / ell
            d2_eta = (-tau / ell + (math.sin(2 * y) - math.sin(2 * y0)) / (2 * ell**2)
                      - 2 / ell**2 * math.sin(y0) * (math.cos(y) - math.cos(y0)))
            closed = [abs(res.d_eta - d_eta), abs(res.d_mu - 2 * math.sin(tau)), abs(res.d2_eta - d2_eta)]
            closed += [abs(m - _mixed_closed_form(k, ell, th0, tau)) for k, m in enumerate(res.mixed, start=1)]
            closed_err = max(closed_err, *closed)

            h = 0.01
            f = [_theta_signed_eta(ell, j * h, th0, tau) for j in (-2, -1, 0, 1, 2)]
            fd1 = (-f[4] + 8 * f[3] - 8 * f[1] + f[0]) / (12 * h)
            fd2 = (-f[4] + 16 * f[3] - 30 * f[2] + 16 * f[1] - f[0]) / (12 * h * h)
            hm = 1e-3
            fdm = (flow_theta(ReducedParams(ell, hm, 0.0), th0, 0.0, tau, TIGHT)
                   - flow_theta(ReducedParams(ell, -hm, 0.0), th0, 0.0, tau, TIGHT)) / (2 * hm)
            fd_err = max(fd_err, abs(res.d_eta - fd1), abs(res.d2_eta - fd2), abs(res.d_mu - fdm))
    record_property("closed_form_error", f"{closed_err:.2e}")
    record_property("finite_difference_error", f"{fd_err:.2e}")
    assert closed_err < 1e-8
    assert fd_err < 1e-6
    assert clock.elapsed < 10.0


def test_criterion_03_taylor_coefficient(record_property):
    clock = Clock()
    etas = np.linspace(0.004, 0.04, 10)
    for ell in (1, 2):
        coeffs = []
        for th0 in (0.0, 1.3):
            disp = [flow_theta(ReducedParams(ell, 0.0, e), th0, 0.0, TWO_PI, TIGHT) - th0 - TWO_PI * ell for e in etas]
            # disp = c2 eta^2 + c3 eta^3 + c4 eta^4 (no constant or linear term at mu = 0)
            V = np.vstack([etas**2, etas**3, etas**4]).T
            coeffs.append(np.linalg.lstsq(V, np.array(disp), rcond=None)[0][0])
        expected = -math.pi / ell
        rel = max(abs(c - expected) / abs(expected) for c in coeffs)
        record_property(f"ell{ell}_coefficient", f"{coeffs[0]:.6f} vs {expected:.6f}")
        assert rel < 0.01
    assert clock.elapsed < 30.0


def test_criterion_04_growth_points(record_property):
    clock = Clock()
    worst = 0.0
    for r in (1, 2, 3):
        for omega in (0.5, 1.0, 2.0):
            b = locate_growth_by_rotation(r, omega, tol=1e-9)
            worst = max(worst, abs(b - math.sqrt(r * r * omega * omega + 1.0)))
    record_property("max_error", f"{worst:.2e}")
    assert worst < 1e-6
    assert clock.elapsed < 60.0


def test_criterion_05_constriction_agreement(record_property):
    clock = Clock()
    counts = {}
    for ell in (1, 2):
        found = constrictions(ell, 2.0, 0.0, 10.0)
        counts[ell] = len(found)
        for c in found:
            M = monodromy_matrix(build_josephson_system(to_reduced(PhysParams(c.B, c.A, c.omega))))
            hp = to_heun(PhysParams(c.B, c.A, c.omega))
            assert triviality_defect(M) < 1e-7
            assert displacement_sup(to_reduced(PhysParams(c.B, c.A, c.omega)), ell, GRID64) < 1e-6
            assert entire_solution_score(hp) < SCORE_THRESHOLD
            assert conjugate_poly_determinant(ell, hp.lam, hp.mu) != 0
            record_property(f"ell{ell}_A", f"{c.A:.10f}")
    record_property("count_per_ell", counts)
    assert clock.elapsed < 300.0
    assert all(n >= 3 for n in counts.values()), f"fewer than 3 constrictions per ell in (0, 10]: {counts}"


def _criterion_constrictions():
    return [c for ell in (1, 2) for c in constrictions(ell, 2.0, 0.0, 10.0)]


def test_criterion_06_alignment(record_property):
    clock = Clock()
    cons = _criterion_constrictions()
    assert cons, "no constrictions to align"
    worst = 0.0
    for c in cons:
        B, A = align_search(c, offset=0.05)
        worst = max(worst, abs(B - c.ell * c.omega))
    record_property("checked", len(cons))
    record_property("max_offset", f"{worst:.2e}")
    assert worst < 1e-6
    assert clock.elapsed < 300.0


def test_criterion_07_positivity(record_property):
    clock = Clock()
    cons = _criterion_constrictions()
    assert cons, "no constrictions to probe"
    kinds = [constriction_type(c, deltas=(1e-2, 1e-3)) for c in cons]
    for c in cons:
        for delta in (1e-2, 1e-3):
            for A in (c.A - delta, c.A + delta):
                assert rotation_number(PhysParams(c.B, A, c.omega)).rho == pytest.approx(c.ell, abs=1e-9)
    record_property("types", kinds)
    assert all(k == "positive" for k in kinds)
    assert clock.elapsed < 120.0


def test_criterion_08_no_ghost_band(record_property):
    clock = Clock()
    omega = 0.05
    for ell in (1, 2):
        top = 1.0 + (ell - 0.6) * omega
        assert find_constrictions(ell, omega, (0.0, top)) == []
        h = scan_step(omega)
        grid = np.linspace(h, top, int(math.ceil(top / h)))
        d_min = float(defect_profile(ell, omega, grid).min())
        record_property(f"ell{ell}_min_defect", f"{d_min:.3e}")
        assert d_min > 1e-3
    assert clock.elapsed < 300.0


def test_criterion_09_bessel_asymptotics(record_property):
    clock = Clock()
    for r in (0, 1):
        e0 = [asymptotic_error(r, 2.0, A)[0] for A in (10.0, 20.0, 40.0)]
        scaled = [e * A / math.log(A) for e, A in zip(e0, (10.0, 20.0, 40.0))]
        record_property(f"r{r}_scaled", [f"{v:.3e}" for v in scaled])
        assert e0[0] > e0[1] > e0[2]
        assert max(scaled) < 1.0 and scaled[2] <= 1.5 * scaled[0]
    assert clock.elapsed < 120.0


def test_criterion_10_isomonodromy(record_property):
    clock = Clock()
    rng = np.random.default_rng(10)
    trace_drift = struct_drift = p3_worst = 0.0
    for _ in range(5):
        st = normalized_from_chart(rng.uniform(-1, 1), rng.uniform(0.2, 1.0), rng.uniform(0, 2), rng.uniform(0.5, 2.0))
        tau1 = st.tau * math.e
        traj = isoflow_normalized(st, tau1, TIGHT, continue_outside=True)
        t0 = np.trace(monodromy_matrix(st.system(), TIGHT))
        for tau in np.linspace(st.tau, tau1, 5)[1:]:
            trace_drift = max(trace_drift, abs(np.trace(monodromy_matrix(traj.system(float(tau)), TIGHT)) - t0))
        struct_drift = max(struct_drift, max_structure_drift(traj))
        ts, ws = sample_w(traj, 1e-3)
        p3_worst = max(p3_worst, p3_residual(ts, ws, st.ell).max_residual)
    record_property("trace_drift", f"{trace_drift:.2e}")
    record_property("structure_drift", f"{struct_drift:.2e}")
    record_property("p3_residual", f"{p3_worst:.2e}")
    assert trace_drift < 1e-6
    assert struct_drift < 1e-9
    assert p3_worst < 1e-4
    assert clock.elapsed < 120.0


def test_criterion_11_pole_criterion(record_property):
    clock = Clock()
    launches = [PhysParams(2.0, 7.773386982795, 2.0)]
    launches += [PhysParams(c.B, c.A, c.omega) for c in constrictions(1, 0.7, 0.0, 10.0)[:2]]
    assert len(launches) == 3
    for p in launches:
        st = josephson_state(p)
        traj = isoflow_normalized(st, st.tau + 4.5, TIGHT, continue_outside=True)
        found = detect_jos_crossing(traj)
        assert len(found) >= 2, f"only {len(found)} crossings from A={p.A}"
        first, nxt = found[0], found[1]
        assert first.tau0 == pytest.approx(st.tau, abs=1e-10)
        assert first.residue == pytest.approx(1.0, abs=1e-3)
        assert nxt.residue == pytest.approx(1.0, abs=1e-2)
        k_err = float(np.abs(nxt.K - np.diag([0.5, 0.0])).max())
        assert k_err < 1e-5
        record_property(f"A={p.A:.6f}", f"res {first.residue:.8f}/{nxt.residue:.6f} at {nxt.tau0:.4f}, K {k_err:.1e}")
    assert clock.elapsed < 120.0


def test_criterion_12_dynamical_foliation(record_property):
    clock = Clock()
    launches = [PhysParams(2.0, 7.773386982795, 2.0), PhysParams(1.0, 1.5, 0.5), PhysParams(0.5, 2.0, 1.0),
                PhysParams(1.5, 3.0, 1.0)]
    ell_drift = rho_err = p3_worst = 0.0
    returns = 0
    for p in launches:
        st = embed_josephson(p)
        traj = dyn_foliation_flow(st, st.s + 6.0, TIGHT, allow_partial=True)
        for s in np.linspace(st.s, traj.tau1, 12)[1:]:
            x = traj.state(float(s))
            for at in ("0", "inf"):
                r = np.diag(formal_residue(x.system(), at))
                ell_drift = max(ell_drift, abs((r[1] - r[0]).real - st.ell), abs((r[1] - r[0]).imag))
        ts = np.arange(st.s + 0.01, traj.tau1 - 0.01, 1e-3)
        p3_worst = max(p3_worst, p3_residual(ts, [traj.w(float(t)) for t in ts], st.ell).max_residual)
        ret = josephson_return_map(p, settings=TIGHT)
        if ret.params is not None:
            returns += 1
            rho_err = max(rho_err, abs(rotation_number(ret.params, TIGHT).rho - rotation_number(p, TIGHT).rho))
    record_property("ell_drift", f"{ell_drift:.2e}")
    record_property("rho_error", f"{rho_err:.2e} over {returns} returns")
    record_property("p3_residual", f"{p3_worst:.2e}")
    assert returns >= 2
    assert ell_drift < 1e-8
    assert rho_err < 1e-6
    assert p3_worst < 1e-4
    assert clock.elapsed < 120.0


def test_criterion_13_spectral_curve(record_property):
    clock = Clock()
    for omega in (0.05, 0.3, 1.0, 2.0):
        roots = spectral_scan(1, omega, 3.0 / omega)
        assert len(roots) == 1 and abs(roots[0].A - 1.0) < 1e-10
    omega = 0.05
    a_p2 = max(r.A for r in spectral_scan(2, omega, (2.0 + 4.0 * omega) / (2.0 * omega)))
    record_property("A_P2", f"{a_p2:.6f}")
    assert abs(a_p2 - (1 + omega)) < 0.01
    most = 0
    for ell in (1, 2, 3, 4):
        for omega in (0.05, 0.1, 0.3, 0.7, 1.0, 2.0):
            n = len(spectral_scan(ell, omega, (2.0 + 2.0 * ell * omega) * 4 / (2.0 * omega), n_grid=8000))
            most = max(most, n - ell)
            assert n <= ell
    record_property("max_excess_roots", most)
    assert clock.elapsed < 60.0


def test_criterion_14_monotonicity(record_property):
    clock = Clock()
    res = monotonicity_check(1, 0.3, 0.8, 0.05)
    record_property("margin", f"{res.margin:.3e}")
    assert res.holds and res.margin > 0
    assert clock.elapsed < 60.0


def _skew_hessian(theta, tau, A):
    # Hessian of cos(theta) + B + A cos(tau) on its skew gradient
    return -math.cos(theta) * (A * math.sin(tau)) ** 2 - A * math.cos(tau) * math.sin(theta) ** 2


def test_criterion_15_slow_curve(record_property):
    clock = Clock()
    vals = np.linspace(0.05, 2.5, 50)
    checked = 0
    boundary = np.linspace(0, TWO_PI, 400)
    for B in vals:
        for A in vals:
            if min(abs(A - abs(1 - B)), abs(A - (1 + B))) < 1e-9:
                continue
            label = classify_slow_curve(B, A).label
            cert = convexity_certificate(B, A)
            assert (cert > 0) == (label == CONVEX), (B, A, label, cert)
            if label == CONVEX:
                edge = np.concatenate([1 + B + A * np.cos(boundary), np.cos(boundary) + B + A])
                assert edge.min() > 0
                assert all(_skew_hessian(th, t, A) > 0 for th, t in slow_curve_points(B, A, 32))
            elif label == TWO_COMPONENTS:
                assert np.all(np.abs(B + A * np.cos(boundary)) < 1)
            checked += 1
    record_property("grid_points", checked)
    assert clock.elapsed < 30.0


@pytest.mark.parametrize("omega", [2.0, 0.7, 0.3])
def test_criterion_16_portrait_regression(omega, record_property):
    clock = Clock()
    fixture = FIXTURES / f"portrait_omega_{omega:g}.json"
    text = portrait_json(build_portrait(omega))
    pinned = fixture.read_text(encoding="utf-8")
    record_property("constrictions", len(json.loads(text)["constrictions"]))
    record_property("seconds", f"{clock.elapsed:.1f}")
    assert text == pinned
    rng = np.random.default_rng(int(omega * 100))
    worst = 0.0
    for _ in range(100 // 3 + (1 if omega == 2.0 else 0)):
        B, A = rng.uniform(-4 * omega - 1, 4 * omega + 1), rng.uniform(0, 10)
        rho = rotation_number(PhysParams(B, A, omega)).rho
        worst = max(worst, abs(rotation_number(PhysParams(B, -A, omega)).rho - rho),
                    abs(rotation_number(PhysParams(-B, A, omega)).rho + rho))
    record_property("symmetry_error", f"{worst:.2e}")
    assert worst < 1e-8
    assert clock.elapsed < 300.0
