"""Rigid-body joining models: the snap-hook beam as a chain of mass-spring-damper sub-models.

Three decompositions are supported. ``slide`` has one translational degree
of freedom at the tip, ``one_hinge`` a single rigid link hinged at the root,
and ``two_hinge`` two links hinged at the root and at mid-length. The tip is
pushed by a stiff unilateral contact spring toward the deflection the head
geometry demands.

Kinematics are linearised about the straight beam, matching the
small-deflection theory the chain stands in for: tip displacement is a fixed
linear combination of the joint coordinates and the tip slope is the summed
hinge angle. The chain is advanced with an implicit Euler step (stiffness,
damping and an active contact taken at the end of the step), which for this
linear system can only dissipate energy when no external work is done.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .beam_model import BeamParams, JoiningForces, joining_force
from .geometry import SnapHookProfile

VARIANTS = ("slide", "one_hinge", "two_hinge")
DEFAULT_EPSILON = 1e-7
DEFAULT_DENSITY = 1010.0  # PA12, kg/m^3
CONTACT_STIFFNESS_FACTOR = 100.0
DEFAULT_DT = 1e-4


def slide_stiffness(params: BeamParams, l: float) -> float:
    """Equivalent tip stiffness ``3 E I / l**3`` against displacement."""
    if not l > 0:
        raise ValueError(f"beam length must be positive, got {l!r}")
    return 3.0 * params.E_S * params.I_y / l**3


def hinge_stiffness(params: BeamParams, l: float, eps: float = DEFAULT_EPSILON, lever: float | None = None) -> float:
    """Equivalent rotational stiffness from a small perturbing tip force ``eps``.

    ``k_t = eps * lever / atan2(f(eps), lever)`` where ``f(eps)`` is the tip
    deflection of the full beam of length ``l``. ``lever`` defaults to ``l``
    (a hinge at the root); a hinge closer to the tip passes its own lever arm.
    """
    if not l > 0:
        raise ValueError(f"beam length must be positive, got {l!r}")
    if not eps > 0:
        raise ValueError(f"perturbing force must be positive, got {eps!r}")
    arm = l if lever is None else lever
    if not arm > 0:
        raise ValueError(f"lever arm must be positive, got {arm!r}")
    f = eps / slide_stiffness(params, l)
    return eps * arm / math.atan2(f, arm)


def critical_damping(m: float, k: float) -> float:
    """Viscous damping for a damping ratio of one: ``sqrt(4 m k)``."""
    if not k > 0:
        raise ValueError(f"stiffness must be positive, got {k!r}")
    if m < 0:
        raise ValueError(f"mass must be non-negative, got {m!r}")
    return math.sqrt(4.0 * m * k)


def series_stiffness(n: int, k_equiv: float) -> float:
    """Stiffness of each of ``n`` identical springs in series that add up to ``k_equiv``."""
    if n < 1:
        raise ValueError(f"need at least one spring, got n={n!r}")
    if not k_equiv > 0:
        raise ValueError("equivalent stiffness must be positive")
    return n * k_equiv


@dataclass
class MsdSubmodel:
    mass: float  # kg, or kg m^2 for hinges
    stiffness: float
    damping: float
    rest: float = 0.0


@dataclass
class LumpedModel:
    variant: str
    submodels: list[MsdSubmodel]
    segment_lengths: list[float]
    mass_matrix: list[list[float]]
    contact_stiffness: float
    epsilon: float = DEFAULT_EPSILON
    velocity_bound: float = 1e3
    q: list[float] = field(default_factory=list)
    v: list[float] = field(default_factory=list)

    def __post_init__(self):
        n = {"slide": 1, "one_hinge": 1, "two_hinge": 2}[self.variant]
        if len(self.submodels) != n:
            raise ValueError(f"{self.variant} needs {n} sub-models, got {len(self.submodels)}")
        if not self.q:
            self.q = [sm.rest for sm in self.submodels]
            self.v = [0.0] * n

    @property
    def dof(self) -> int:
        return len(self.submodels)

    def reset(self):
        self.q = [sm.rest for sm in self.submodels]
        self.v = [0.0] * self.dof

    def jacobian(self) -> list[float]:
        """Constant map from joint coordinates to lateral tip displacement."""
        if self.variant == "slide":
            return [1.0]
        return [sum(self.segment_lengths[i:]) for i in range(self.dof)]

    def tip(self) -> tuple[float, float, list[float]]:
        """Tip lateral displacement, tip slope and load Jacobian at the current state."""
        J = self.jacobian()
        y = sum(j * qi for j, qi in zip(J, self.q))
        slope = 0.0 if self.variant == "slide" else sum(self.q)
        return y, slope, J

    def tip_stiffness(self) -> float:
        """Small-deflection stiffness seen at the tip."""
        if self.variant == "slide":
            return self.submodels[0].stiffness
        return 1.0 / sum(d * d / sm.stiffness for d, sm in zip(self.jacobian(), self.submodels))

    def energy(self) -> float:
        M, v = self.mass_matrix, self.v
        kin = 0.5 * sum(v[i] * M[i][j] * v[j] for i in range(self.dof) for j in range(self.dof))
        pot = 0.5 * sum(sm.stiffness * (qi - sm.rest) ** 2 for sm, qi in zip(self.submodels, self.q))
        return kin + pot


def _point_mass_matrix(variant: str, lengths: list[float], m_beam: float, m_head: float) -> list[list[float]]:
    if variant == "slide":
        # Tip-equivalent mass of a uniform cantilever plus the head.
        return [[33.0 / 140.0 * m_beam + m_head]]
    l = sum(lengths)
    if variant == "one_hinge":
        return [[m_beam * l * l / 3.0 + m_head * l * l]]
    a1, a2 = lengths
    m1, m2 = m_beam * a1 / l, m_beam * a2 / l
    M = [[0.0, 0.0], [0.0, 0.0]]
    # Link centres, head point and link rotations, linearised about the straight beam.
    terms = [
        (m1, (a1 / 2.0, 0.0)),
        (m2, (a1 + a2 / 2.0, a2 / 2.0)),
        (m_head, (a1 + a2, a2)),
        (m1 * a1 * a1 / 12.0, (1.0, 0.0)),
        (m2 * a2 * a2 / 12.0, (1.0, 1.0)),
    ]
    for m, J in terms:
        for i in range(2):
            for j in range(2):
                M[i][j] += m * J[i] * J[j]
    return M


def build(variant: str, profile: SnapHookProfile, params: BeamParams, density: float = DEFAULT_DENSITY,
          eps: float = DEFAULT_EPSILON, split: float = 0.5) -> LumpedModel:
    """Build a lumped model at rest; ``split`` is the root-side share of the beam for two hinges."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown lumped variant {variant!r}; expected one of {VARIANTS}")
    if not density > 0:
        raise ValueError("density must be positive")
    l = profile.l
    m_beam = density * l * profile.b * profile.h
    m_head = density * profile.b * 0.5 * profile.h_k * profile.footprint
    k_slide = slide_stiffness(params, l)

    if variant == "slide":
        lengths = [l]
        stiff = [k_slide]
    elif variant == "one_hinge":
        lengths = [l]
        stiff = [hinge_stiffness(params, l, eps)]
    else:
        lengths = [split * l, (1.0 - split) * l]
        levers = [l, lengths[1]]
        stiff = [series_stiffness(2, hinge_stiffness(params, l, eps, lever=d)) for d in levers]

    M = _point_mass_matrix(variant, lengths, m_beam, m_head)
    subs = [MsdSubmodel(M[i][i], k, critical_damping(M[i][i], k)) for i, k in enumerate(stiff)]
    return LumpedModel(variant, subs, lengths, M, CONTACT_STIFFNESS_FACTOR * k_slide, eps)


def _solve(A: list[list[float]], b: list[float]) -> list[float]:
    if len(b) == 1:
        return [b[0] / A[0][0]]
    det = A[0][0] * A[1][1] - A[0][1] * A[1][0]
    return [(A[1][1] * b[0] - A[0][1] * b[1]) / det, (A[0][0] * b[1] - A[1][0] * b[0]) / det]


def step(model: LumpedModel, tip_penetration: float, contact_angle: float, mu0: float,
         dt: float = DEFAULT_DT, tip_load: float = 0.0) -> tuple[LumpedModel, JoiningForces]:
    """Advance the chain by ``dt`` against the deflection demanded at the tip.

    ``tip_penetration`` is the deflection the head geometry requires; the
    contact spring only pushes (unilateral). ``tip_load`` is an optional
    external lateral force at the tip. Returns the same model, mutated, and the
    lateral/joining force pair at the contact.
    """
    if not 0.0 < dt <= 1e-3:
        raise ValueError(f"lumped step dt must lie in (0, 1 ms], got {dt!r}")
    n = model.dof
    y, _, J = model.tip()
    gap = tip_penetration - y
    kc = model.contact_stiffness if gap > 0.0 else 0.0
    M = model.mass_matrix
    q, v = model.q, model.v

    A = [[M[i][j] + dt * dt * kc * J[i] * J[j] for j in range(n)] for i in range(n)]
    rhs = []
    for i, sm in enumerate(model.submodels):
        A[i][i] += dt * sm.damping + dt * dt * sm.stiffness
        force = -sm.stiffness * (q[i] - sm.rest) + J[i] * (kc * gap + tip_load)
        rhs.append(sum(M[i][j] * v[j] for j in range(n)) + dt * force)
    v_new = _solve(A, rhs)

    if any(not math.isfinite(x) or abs(x) > model.velocity_bound for x in v_new):
        k_max = max(sm.stiffness for sm in model.submodels)
        raise ValueError(f"unstable integration: dt={dt:g} s, k={k_max:g}, velocity={v_new}")
    model.v = v_new
    model.q = [qi + dt * vi for qi, vi in zip(q, v_new)]

    y_new, slope, _ = model.tip()
    fq = model.contact_stiffness * max(0.0, tip_penetration - y_new) if kc > 0.0 else 0.0
    if fq <= 0.0:
        return model, JoiningForces(0.0, 0.0)
    return model, JoiningForces(fq, joining_force(fq, contact_angle, slope, mu0))


def settle(model: LumpedModel, tip_load: float, dt: float = DEFAULT_DT, max_steps: int = 200_000) -> float:
    """Step under a constant tip load until the joint coordinates stop changing; return the tip deflection."""
    for _ in range(max_steps):
        before = model.q
        step(model, 0.0, 0.0, 0.0, dt, tip_load=tip_load)
        if model.q == before:
            break
    return model.tip()[0]
