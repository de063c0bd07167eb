import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snapfit.geometry import (DEFAULT_DISCONTINUITY_THRESHOLD, PlanarPose, RailProfile, SnapHookProfile,
                              contour_angle, deflection_from_pose, head_contour, max_deflection,
                              measure_overlap, overlap_discontinuity)

MM = 1e-3
DEG = math.pi / 180


def hook(contour="I", alpha=30.0, h_k=1.0, s=0.1, **kw):
    if contour in ("II", "III"):
        kw.setdefault("plateau_length", 1.0 * MM)
    if contour == "III":
        kw.setdefault("ramp_length", 2.0 * MM)
    return SnapHookProfile(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=h_k * MM, alpha=alpha * DEG, s=s * MM,
                           contour=contour, **kw)


RAIL = RailProfile()


def test_plateau_midpoint_of_class_two_is_head_height():
    p = hook("II", alpha=20, h_k=2.0)
    mid = p.rise_length + 0.5 * p.plateau_length
    assert head_contour(p, mid) == pytest.approx(2.0 * MM, rel=1e-12)


def test_rising_flank_follows_tangent():
    assert head_contour(hook("I", 30), 1 * MM) == pytest.approx(math.tan(30 * DEG) * MM, rel=1e-12)
    assert math.isclose(math.tan(30 * DEG) * 1e-3, 0.5774e-3, rel_tol=1e-4)


def test_contour_is_zero_outside_head():
    p = hook("III")
    assert head_contour(p, -1 * MM) == 0.0
    assert head_contour(p, p.footprint + 1e-6) == 0.0


@pytest.mark.parametrize("contour", ["I", "II", "III"])
def test_contour_steps_are_bounded_by_flank_slope(contour):
    p = hook(contour)
    xs = np.linspace(-0.5 * MM, p.footprint + 0.5 * MM, 4001)
    c = np.array([head_contour(p, x) for x in xs])
    slope = max(abs(math.tan(contour_angle(p, x))) for x in xs)
    assert np.max(np.abs(np.diff(c))) <= slope * (xs[1] - xs[0]) * (1 + 1e-9)


def test_contour_angle_signs():
    p = hook("III")
    assert contour_angle(p, 0.1 * p.rise_length) == pytest.approx(p.alpha)
    assert contour_angle(p, p.rise_length + 0.5 * p.plateau_length) == 0.0
    assert contour_angle(p, p.footprint - 0.1 * MM) < 0


def test_max_deflection_examples():
    f, res = max_deflection(hook(h_k=2.0, s=0.5))
    assert f == pytest.approx(1.5 * MM, rel=1e-12) and res is False
    f, res = max_deflection(hook(h_k=1.5, s=-0.2))
    assert f == pytest.approx(1.7 * MM, rel=1e-12) and res is True


@pytest.mark.parametrize("bad", [dict(l=0), dict(alpha=0), dict(alpha=math.pi / 2), dict(h_k=-1),
                                 dict(contour="IV")])
def test_invalid_profiles_rejected(bad):
    kw = dict(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=1 * MM, alpha=30 * DEG)
    kw.update(bad)
    with pytest.raises(ValueError):
        SnapHookProfile(**kw)


def test_contour_two_requires_plateau():
    with pytest.raises(ValueError, match="plateau"):
        SnapHookProfile(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=1 * MM, alpha=30 * DEG, contour="II")


def pose_for(p, xi_corner, u_corner):
    """Hook pose (unrotated) that puts the lip's top corner at head coordinates (u, xi)."""
    return PlanarPose(-u_corner, -xi_corner, 0.0)


def test_apex_on_lip_line_gives_max_deflection():
    p = hook("I", s=0.0)
    sample = measure_overlap(p, RAIL, pose_for(p, p.rise_length, 0.0))
    assert sample.deflection == pytest.approx(max_deflection(p)[0], rel=1e-12)


def test_mid_flank_penetration_class_one():
    p = hook("I", alpha=20)
    # Lip corner 1 mm up the rising flank, flush with the beam face.
    f = deflection_from_pose(p, RAIL, pose_for(p, 1 * MM, 0.0))
    assert f == pytest.approx(math.tan(20 * DEG) * MM, rel=1e-12)
    assert math.isclose(f, 0.3640e-3, rel_tol=1e-3)


def test_clear_pose_has_zero_overlap():
    p = hook()
    assert measure_overlap(p, RAIL, pose_for(p, -2 * MM, 0.0)).deflection == 0.0
    assert measure_overlap(p, RAIL, pose_for(p, 0.5 * MM, 2 * MM)).deflection == 0.0


def brute_force_overlap(p, rail, pose, spacing=10e-6):
    """Sample the lip side every 10 um and take the largest head penetration."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    best = 0.0
    for z in np.arange(0.0, -rail.edge_height - 1e-15, -spacing):
        dx, dz = -pose.x, z - pose.z
        u, xi = c * dx - s * dz, s * dx + c * dz
        if xi < 0 or u < -p.h:
            continue
        best = max(best, head_contour(p, xi) - u)
    return best


@settings(max_examples=150, deadline=None)
@given(contour=st.sampled_from(["I", "II", "III"]),
       xi=st.floats(-1.5e-3, 4e-3), u=st.floats(-1e-3, 1.5e-3), theta=st.floats(-0.3, 0.3))
def test_overlap_matches_brute_force_sampler(contour, xi, u, theta):
    p = hook(contour)
    pose = PlanarPose(-u, -xi, theta)
    exact = measure_overlap(p, RAIL, pose).deflection
    sampled = brute_force_overlap(p, RAIL, pose)
    # Exact maximum over a piecewise-linear function bounds any sampling from above, and the
    # sampling gap is at most (steepest contour slope + lip tilt) x spacing.
    lip = 10e-6 * (math.tan(85 * DEG) + abs(math.tan(theta)) + 1.0)
    assert exact >= sampled - 1e-12
    assert exact - sampled <= lip
    assert (exact == 0.0) == (sampled == 0.0) or exact <= lip


def test_overlap_discontinuity_examples():
    assert overlap_discontinuity([0, 0.1e-3, 1.8e-3, 0.2e-3], 0.5e-3) is True
    assert overlap_discontinuity([0, 0.1e-3, 0.2e-3, 0.3e-3]) is False
    assert DEFAULT_DISCONTINUITY_THRESHOLD == 0.5e-3


def test_overlap_discontinuity_needs_history():
    with pytest.raises(ValueError, match="insufficient history"):
        overlap_discontinuity([0.0])
