"""Snap-hook and rail cross-section geometry.

All lengths are metres and all angles radians. The hook head is described in
its own planar frame: the origin sits on the beam face at the level of the
head's leading tip, ``x`` points from the beam toward the mating rail (the
direction the head protrudes) and ``z`` points back up the beam, opposite to
the joining direction. The contour height ``c(xi)`` is the head protrusion at
distance ``xi`` above the tip.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

CONTOUR_CLASSES = ("I", "II", "III")
RECESS_SIDES = ("none", "left", "right")

# Flank angle used for the "sharp" declines of classes I and II.
STEEP_FLANK_ANGLE = math.radians(85.0)
DEFAULT_DISCONTINUITY_THRESHOLD = 0.5e-3


@dataclass(frozen=True)
class SnapHookProfile:
    l: float
    b: float
    h: float
    h_k: float
    alpha: float
    s: float = 0.0
    contour: str = "I"
    plateau_length: float = 0.0
    ramp_length: float = 0.0
    recess_side: str = "none"

    def __post_init__(self):
        for name in ("l", "b", "h", "h_k"):
            if not getattr(self, name) > 0:
                raise ValueError(f"hook.{name} must be positive, got {getattr(self, name)!r}")
        if not 0.0 < self.alpha < math.pi / 2:
            raise ValueError(f"hook.alpha must lie in (0, pi/2), got {self.alpha!r}")
        if self.s > self.h_k:
            raise ValueError(f"hook.s={self.s!r} exceeds head height h_k={self.h_k!r}")
        if self.contour not in CONTOUR_CLASSES:
            raise ValueError(f"hook.contour must be one of {CONTOUR_CLASSES}, got {self.contour!r}")
        if self.contour in ("II", "III") and not self.plateau_length > 0:
            raise ValueError(f"contour {self.contour} needs plateau_length > 0")
        if self.contour == "III" and not self.ramp_length > 0:
            raise ValueError("contour III needs ramp_length > 0")
        if self.recess_side not in RECESS_SIDES:
            raise ValueError(f"hook.recess_side must be one of {RECESS_SIDES}")

    @property
    def rise_length(self) -> float:
        return self.h_k / math.tan(self.alpha)

    def breakpoints(self) -> tuple[float, ...]:
        """Arc-length positions where the piecewise-linear contour changes slope."""
        rise = self.rise_length
        if self.contour == "I":
            return (0.0, rise, rise + self.h_k / math.tan(STEEP_FLANK_ANGLE))
        top = rise + self.plateau_length
        if self.contour == "II":
            return (0.0, rise, top, top + self.h_k / math.tan(STEEP_FLANK_ANGLE))
        return (0.0, rise, top, top + self.ramp_length)

    @property
    def footprint(self) -> float:
        return self.breakpoints()[-1]


@dataclass(frozen=True)
class RailProfile:
    """Top-hat rail cross-section; defaults follow the 35 mm standard rail."""

    width: float = 35e-3
    edge_height: float = 1.0e-3
    lip_depth: float = 5e-3
    fixed_hook_clearance: float = 0.15e-3

    def __post_init__(self):
        for name in ("width", "edge_height", "lip_depth", "fixed_hook_clearance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"rail.{name} must be positive")


class PlanarPose(NamedTuple):
    """Pose of one planar frame in another: origin (x, z) and pitch ``theta``.

    A point ``p`` given in the child frame maps to the parent as
    ``(x + p.x cos(theta) + p.z sin(theta), z - p.x sin(theta) + p.z cos(theta))``
    so a positive pitch lifts points with negative child ``x``.
    """

    x: float
    z: float
    theta: float = 0.0


class OverlapSample(NamedTuple):
    deflection: float
    flank_angle: float  # local contour slope angle at the governing contact point
    xi: float  # arc-length position of that contact point on the head


def head_contour(profile: SnapHookProfile, x: float) -> float:
    """Head protrusion at arc length ``x`` above the leading tip (0 outside the head)."""
    if x <= 0.0:
        return 0.0
    bp = profile.breakpoints()
    rise = bp[1]
    if x <= rise:
        return x * math.tan(profile.alpha)
    if profile.contour == "I":
        end = bp[2]
        if x >= end:
            return 0.0
        return profile.h_k * (end - x) / (end - rise)
    top, end = bp[2], bp[3]
    if x <= top:
        return profile.h_k
    if x >= end:
        return 0.0
    return profile.h_k * (end - x) / (end - top)


def contour_angle(profile: SnapHookProfile, x: float) -> float:
    """Slope angle of the contour at ``x``: alpha on the rise, 0 on plateaus, negative on declines."""
    bp = profile.breakpoints()
    if x < 0.0 or x >= bp[-1]:
        return 0.0
    if x <= bp[1]:
        return profile.alpha
    if profile.contour == "I":
        return -STEEP_FLANK_ANGLE
    if x < bp[2]:
        return 0.0
    if profile.contour == "II":
        return -STEEP_FLANK_ANGLE
    return -math.atan(profile.h_k / profile.ramp_length)


def max_deflection(profile: SnapHookProfile, rail: RailProfile | None = None) -> tuple[float, bool]:
    """Return ``(f_max, residual)`` with ``f_max = h_k - s``; ``residual`` flags a permanently bent beam."""
    return profile.h_k - profile.s, profile.s < 0.0


def _to_hook(pose: PlanarPose, px: float, pz: float) -> tuple[float, float]:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dx, dz = px - pose.x, pz - pose.z
    return c * dx - s * dz, s * dx + c * dz


def measure_overlap(profile: SnapHookProfile, rail: RailProfile, pose: PlanarPose) -> OverlapSample:
    """Cast the measurement ray along the rail lip side against the head contour.

    ``pose`` is the hook frame expressed in the lip frame, whose origin is the
    outer top corner of the rail lip with the lip material at ``x >= 0`` and
    ``-edge_height <= z <= 0``. Returns the largest penetration of the lip side
    into the head (the deflection the beam needs to clear it), clamped at 0.
    Lip points behind the beam's back face do not load the head.
    """
    ux0, xi0 = _to_hook(pose, 0.0, 0.0)
    ux1, xi1 = _to_hook(pose, 0.0, -rail.edge_height)

    # Candidate parameters along the lip side: its ends plus every contour
    # breakpoint it crosses. The penetration is piecewise linear in between.
    ts = [0.0, 1.0]
    dxi = xi1 - xi0
    if abs(dxi) > 1e-15:
        for b in profile.breakpoints():
            t = (b - xi0) / dxi
            if 0.0 < t < 1.0:
                ts.append(t)

    best = OverlapSample(0.0, 0.0, 0.0)
    for t in ts:
        xi = xi0 + t * dxi
        if xi < 0.0:
            continue
        u = ux0 + t * (ux1 - ux0)
        if u < -profile.h:
            continue
        pen = head_contour(profile, xi) - u
        if pen > best.deflection:
            # A contour kink pressed against the flat lip side loads it along
            # the side normal; only the lip corners ride the flank itself.
            angle = contour_angle(profile, xi) if t in (0.0, 1.0) else 0.0
            best = OverlapSample(pen, angle, xi)
    return best


def deflection_from_pose(profile: SnapHookProfile, rail: RailProfile, relative_pose: PlanarPose) -> float:
    """Beam-tip deflection required to resolve the hook/lip overlap at ``relative_pose``."""
    return measure_overlap(profile, rail, relative_pose).deflection


def overlap_discontinuity(overlap_series: Sequence[float], threshold: float = DEFAULT_DISCONTINUITY_THRESHOLD) -> bool:
    """True when consecutive overlap samples jump by more than ``threshold`` (tunnelling)."""
    if len(overlap_series) < 2:
        raise ValueError("insufficient history: need at least 2 overlap samples")
    prev = overlap_series[0]
    for cur in overlap_series[1:]:
        if abs(cur - prev) > threshold:
            return True
        prev = cur
    return False
