import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import jv

from phaselock.params import PhysParams
from phaselock.poincare import rotation_number
from phaselock.portrait import (
    Constriction,
    NoSignChangeError,
    Portrait,
    bessel_j,
    boundary_point,
    build_portrait,
    constriction_type,
    find_constrictions,
    fixed_point_defect,
    growth_point,
    portrait_csv,
    portrait_json,
    portrait_svg,
)


@settings(max_examples=200)
@given(st.integers(-6, 6), st.floats(-60, 60))
def test_bessel_against_scipy(n, x):
    assert bessel_j(n, x) == pytest.approx(jv(n, x), abs=1e-13)


def test_boundary_point_fixes_alpha():
    bp = boundary_point(1, 0.0, 2.0, 1.0)
    assert abs(fixed_point_defect(1, 0.0, 2.0, bp.B, 1.0)) < 1e-9
    locked = [abs(rotation_number(PhysParams(bp.B + d, 2.0, 1.0)).rho - 1.0) < 1e-9 for d in (-1e-4, 1e-4)]
    assert sorted(locked) == [False, True]
    with pytest.raises(NoSignChangeError):
        boundary_point(1, 0.0, 2.0, 1.0, bracket=(5.0, 6.0))


def test_growth_point_formula():
    assert growth_point(2, 0.5) == pytest.approx(math.sqrt(2.0))
    assert growth_point(-1, 1.0) == pytest.approx(-math.sqrt(2.0))
    with pytest.raises(ValueError):
        growth_point(0, 1.0)


def test_find_known_constriction():
    cons = find_constrictions(1, 2.0, (7.0, 8.5))
    assert len(cons) == 1
    c = cons[0]
    assert c.A == pytest.approx(7.773386982795, abs=1e-8)
    assert c.defect < 1e-7 and c.residual < 1e-6 and c.heun_score < 0.5 and c.heun_determinant != 0
    assert constriction_type(c) == "positive"
    assert find_constrictions(1, 2.0, (7.0, 7.5)) == []


def test_find_rejects_bad_input():
    with pytest.raises(ValueError):
        find_constrictions(-1, 1.0, (0, 1))
    with pytest.raises(ValueError):
        find_constrictions(1, 0.0, (0, 1))


def test_small_portrait_round_trip_and_exports():
    p = build_portrait(2.0, r_max=1, A_max=2.0, n_A=5)
    text = portrait_json(p)
    assert portrait_json(Portrait.from_json(json.loads(text))) == text
    assert len(p.curves) == 4 and all(len(c["points"]) > 0 for c in p.curves)
    assert portrait_csv(p).splitlines()[0] == "r,alpha,A,B"
    svg = portrait_svg(p)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    with pytest.raises(ValueError):
        Portrait.from_json({"schema": "other"})


def test_curves_bound_the_locked_area():
    p = build_portrait(1.0, r_max=1, A_max=1.0, n_A=3)
    pts = {c["alpha"]: dict(map(tuple, c["points"])) for c in p.curves if c["r"] == 1}
    for A in (0.5, 1.0):
        lo, hi = sorted((pts["0"][A], pts["pi"][A]))
        mid = 0.5 * (lo + hi)
        assert rotation_number(PhysParams(mid, A, 1.0)).rho == pytest.approx(1.0, abs=1e-9)
