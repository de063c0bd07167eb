import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snapfit import lumped_model as lm
from snapfit.beam_model import BeamParams
from snapfit.geometry import SnapHookProfile

MM = 1e-3
DEG = math.pi / 180
PROFILE = SnapHookProfile(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=1 * MM, alpha=30 * DEG)
PARAMS = BeamParams.from_profile(PROFILE)


def test_variant_structure():
    k = lm.slide_stiffness(PARAMS, PROFILE.l)
    s = lm.build("slide", PROFILE, PARAMS)
    assert s.dof == 1 and s.submodels[0].stiffness == pytest.approx(k)
    one = lm.build("one_hinge", PROFILE, PARAMS)
    assert one.dof == 1 and one.submodels[0].stiffness == pytest.approx(lm.hinge_stiffness(PARAMS, PROFILE.l))
    two = lm.build("two_hinge", PROFILE, PARAMS)
    assert two.dof == 2
    assert two.submodels[0].stiffness == pytest.approx(2 * lm.hinge_stiffness(PARAMS, PROFILE.l, lever=PROFILE.l))


def test_unknown_variant():
    with pytest.raises(ValueError, match="unknown lumped variant"):
        lm.build("three_hinge", PROFILE, PARAMS)


@pytest.mark.parametrize("fn,args", [(lm.slide_stiffness, (PARAMS, 0.0)), (lm.hinge_stiffness, (PARAMS, 0.01, 0.0)),
                                     (lm.critical_damping, (1.0, 0.0)), (lm.series_stiffness, (0, 1.0))])
def test_invalid_inputs(fn, args):
    with pytest.raises(ValueError):
        fn(*args)


def test_slide_static_load_is_hookean():
    m = lm.build("slide", PROFILE, PARAMS)
    F = 0.5
    y = lm.settle(m, F)
    assert y == pytest.approx(F / m.submodels[0].stiffness, rel=1e-2)


@pytest.mark.parametrize("variant", lm.VARIANTS)
def test_tip_stiffness_matches_beam(variant):
    m = lm.build(variant, PROFILE, PARAMS)
    assert m.tip_stiffness() == pytest.approx(lm.slide_stiffness(PARAMS, PROFILE.l), rel=1e-6)


@pytest.mark.parametrize("variant", lm.VARIANTS)
def test_free_decay_never_gains_energy(variant):
    m = lm.build(variant, PROFILE, PARAMS)
    m.q = [0.01 * (i + 1) for i in range(m.dof)]
    e = m.energy()
    for _ in range(2000):
        lm.step(m, 0.0, 0.0, 0.0)
        e2 = m.energy()
        assert e2 <= e * (1 + 1e-12)
        e = e2


def test_contact_is_unilateral():
    m = lm.build("slide", PROFILE, PARAMS)
    m.q = [0.5 * MM]
    _, forces = lm.step(m, 0.1 * MM, 30 * DEG, 0.2)
    assert forces == (0.0, 0.0)


def test_step_dt_range():
    m = lm.build("slide", PROFILE, PARAMS)
    with pytest.raises(ValueError, match="dt"):
        lm.step(m, 0.0, 0.0, 0.0, dt=1e-2)


def test_instability_is_reported():
    m = lm.build("slide", PROFILE, PARAMS)
    m.velocity_bound = 1e-9
    with pytest.raises(ValueError, match="unstable integration"):
        lm.step(m, 1 * MM, 30 * DEG, 0.2)


@settings(max_examples=30, deadline=None)
@given(load=st.floats(0.05, 2.0), variant=st.sampled_from(lm.VARIANTS))
def test_settled_deflection_is_linear_in_load(load, variant):
    m = lm.build(variant, PROFILE, PARAMS)
    y = lm.settle(m, load)
    assert y == pytest.approx(load / lm.slide_stiffness(PARAMS, PROFILE.l), rel=1e-6)


def test_two_hinge_tip_slope_is_closer_to_beam():
    k = lm.slide_stiffness(PARAMS, PROFILE.l)
    F = 0.5
    f = F / k
    beam_slope = 1.5 * f / PROFILE.l
    slopes = {}
    for v in ("one_hinge", "two_hinge"):
        m = lm.build(v, PROFILE, PARAMS)
        lm.settle(m, F)
        slopes[v] = m.tip()[1]
    assert abs(slopes["two_hinge"] - beam_slope) < abs(slopes["one_hinge"] - beam_slope)
