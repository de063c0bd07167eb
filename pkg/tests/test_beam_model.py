import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snapfit.beam_model import (BeamParams, analytic_wrench, area_moment, forces_from_overlap, inclination_angle,
                                joining_force, lateral_force)
from snapfit.geometry import PlanarPose, RailProfile, SnapHookProfile, max_deflection

MM = 1e-3
DEG = math.pi / 180
I_HAND = 2e-3 * (1e-3) ** 3 / 12  # b = 2 mm, h = 1 mm


def params(E=1e9, I=I_HAND, mu0=0.2, mode="constant"):
    return BeamParams(E_S=E, I_y=I, mu0=mu0, l=10 * MM, l_eff_mode=mode)


def test_area_moment_rejects_degenerate_sections():
    with pytest.raises(ValueError, match="invalid cross-section"):
        area_moment(0.0, 1.0)


def test_lateral_force_rejects_zero_length():
    with pytest.raises(ValueError, match="invalid effective length"):
        lateral_force(1e-3, 0.0, params())


def test_joining_force_self_locking():
    with pytest.raises(ValueError, match="self-locking"):
        joining_force(1.0, 80 * DEG, 0.0, 0.3)


def test_joining_force_equals_friction_angle_form():
    # Independent oracle: F_J = F_Q tan(alpha + gamma + rho) with rho = atan(mu0).
    for a in (5, 20, 45, 60):
        for mu in (0.0, 0.1, 0.3):
            expect = math.tan(a * DEG + math.atan(mu))
            assert joining_force(1.0, a * DEG, 0.0, mu) == pytest.approx(expect, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(f=st.floats(1e-6, 2e-3), l=st.floats(2e-3, 30e-3), E=st.floats(1e8, 5e9))
def test_deflection_energy_identity(f, l, E):
    # Work of the tip force equals stored bending energy 3EI f^2 / (2 l^3).
    p = params(E=E)
    F = lateral_force(f, l, p)
    assert 0.5 * F * f == pytest.approx(1.5 * E * p.I_y * f * f / l**3, rel=1e-12)


def test_effective_length_modes():
    prof = SnapHookProfile(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=1 * MM, alpha=30 * DEG)
    assert params().effective_length(0.0, prof) == 10 * MM
    lin = params(mode="linear")
    assert lin.effective_length(0.0, prof) > 10 * MM > lin.effective_length(prof.footprint, prof)
    assert lin.effective_length(prof.rise_length, prof) == pytest.approx(10 * MM)


def test_forces_zero_without_overlap():
    prof = SnapHookProfile(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=1 * MM, alpha=30 * DEG)
    assert forces_from_overlap(0.0, prof.alpha, 0.0, prof, params()) == (0.0, 0.0)


def test_wrench_at_apex_composes_the_three_formulas():
    prof = SnapHookProfile(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=1 * MM, alpha=30 * DEG, s=0.0)
    p = BeamParams.from_profile(prof)
    pose = PlanarPose(0.0, -prof.rise_length, 0.0)
    fq, fj = analytic_wrench(pose, prof, RailProfile(), p, corrected=False)
    f = max_deflection(prof)[0]
    assert fq == pytest.approx(3 * p.E_S * p.I_y * f / prof.l**3, rel=1e-12)
    gamma = 1.5 * f / prof.l
    assert fj == pytest.approx(fq * math.tan(prof.alpha + gamma + math.atan(p.mu0)), rel=1e-12)


def test_wrench_past_snap_in_is_zero():
    prof = SnapHookProfile(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=1 * MM, alpha=30 * DEG, s=0.1 * MM)
    p = BeamParams.from_profile(prof)
    # Lip sits fully above the head footprint, beam relaxed.
    pose = PlanarPose(0.0, -(prof.footprint + 1.5 * MM), 0.0)
    assert analytic_wrench(pose, prof, RailProfile(), p) == (0.0, 0.0)


def test_inclination_examples():
    assert inclination_angle(2 * MM, 10 * MM) == pytest.approx(0.3, rel=1e-12)
    assert inclination_angle(1 * MM, 15 * MM) == pytest.approx(0.1, rel=1e-12)
