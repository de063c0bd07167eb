"""Analytical joining model: cantilever-beam deflection mapped to lateral and joining forces."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .geometry import PlanarPose, RailProfile, SnapHookProfile, measure_overlap

CORRECTION_PREFACTOR = 0.5
L_EFF_MODES = ("constant", "linear")


class JoiningForces(NamedTuple):
    lateral: float  # F_Q, perpendicular to the joining direction
    joining: float  # F_J, along the joining direction


def area_moment(b: float, h: float) -> float:
    """Second moment of area of a rectangular ``b x h`` section about its bending axis."""
    if not (b > 0 and h > 0):
        raise ValueError(f"invalid cross-section: b={b!r}, h={h!r}")
    return b * h**3 / 12.0


@dataclass(frozen=True)
class BeamParams:
    E_S: float
    I_y: float
    mu0: float = 0.2
    l: float = 10e-3
    l_eff_mode: str = "constant"

    def __post_init__(self):
        if not self.E_S > 0:
            raise ValueError("beam.E_S must be positive")
        if not self.I_y > 0:
            raise ValueError("beam.I_y must be positive")
        if not 0.0 <= self.mu0 < 1.0:
            raise ValueError("beam.mu0 must lie in [0, 1)")
        if self.l_eff_mode not in L_EFF_MODES:
            raise ValueError(f"beam.l_eff_mode must be one of {L_EFF_MODES}")

    @classmethod
    def from_profile(cls, profile: SnapHookProfile, E_S: float = 1.2e9, mu0: float = 0.2,
                     l_eff_mode: str = "constant") -> "BeamParams":
        return cls(E_S=E_S, I_y=area_moment(profile.b, profile.h), mu0=mu0, l=profile.l,
                   l_eff_mode=l_eff_mode)

    def effective_length(self, xi: float, profile: SnapHookProfile) -> float:
        """Lever arm of the load for a contact at head position ``xi``.

        The constant mode keeps the load at the full beam length. The linear
        mode moves the load point with the contact: contacts below the apex sit
        farther from the root, contacts above it closer.
        """
        if self.l_eff_mode == "constant":
            return self.l
        shift = profile.rise_length - xi
        return min(max(self.l + shift, 0.5 * self.l), 1.5 * self.l)


def lateral_force(f: float, l_eff: float, params: BeamParams, corrected: bool = False) -> float:
    """Tip force needed for deflection ``f``: ``3 E_S I_y f / l_eff**3`` (halved when corrected)."""
    if not l_eff > 0:
        raise ValueError(f"invalid effective length: {l_eff!r}")
    force = 3.0 * params.E_S * params.I_y * f / l_eff**3
    return CORRECTION_PREFACTOR * force if corrected else force


def inclination_angle(f: float, l_eff: float) -> float:
    """Small-angle slope of the beam tip, ``3 f / (2 l_eff)``."""
    if not l_eff > 0:
        raise ValueError(f"invalid effective length: {l_eff!r}")
    return 1.5 * f / l_eff


def joining_force(F_Q: float, alpha: float, gamma: float, mu0: float) -> float:
    """Force along the joining direction for a ramp of angle ``alpha + gamma`` with friction ``mu0``."""
    t = math.tan(alpha + gamma)
    denom = 1.0 - mu0 * t
    if denom <= 0.0:
        raise ValueError(
            f"self-locking regime: 1 - mu0*tan(alpha+gamma) = {denom:.3g} "
            f"(mu0={mu0}, alpha+gamma={math.degrees(alpha + gamma):.2f} deg)"
        )
    return F_Q * (mu0 + t) / denom


def forces_from_overlap(f: float, flank_angle: float, xi: float, profile: SnapHookProfile,
                        params: BeamParams, corrected: bool = True, stiffness_scale: float = 1.0) -> JoiningForces:
    """Forces for a measured overlap. The joining force always uses the uncorrected lateral force;
    the correction only rescales the reported lateral component."""
    if f <= 0.0:
        return JoiningForces(0.0, 0.0)
    l_eff = params.effective_length(xi, profile)
    fq_raw = stiffness_scale * lateral_force(f, l_eff, params)
    gamma = inclination_angle(f, l_eff)
    fj = joining_force(fq_raw, flank_angle, gamma, params.mu0)
    fq = CORRECTION_PREFACTOR * fq_raw if corrected else fq_raw
    return JoiningForces(fq, fj)


def analytic_wrench(relative_pose: PlanarPose, profile: SnapHookProfile, rail: RailProfile,
                    params: BeamParams, corrected: bool = True) -> JoiningForces:
    sample = measure_overlap(profile, rail, relative_pose)
    return forces_from_overlap(sample.deflection, sample.flank_angle, sample.xi, profile, params, corrected)
