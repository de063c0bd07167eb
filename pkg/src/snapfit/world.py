"""Planar quasi-static assembly world.

The terminal is described by its notch ``N`` (inner corner of the fixed hook),
its pitch ``theta_b`` (positive lifts the snap-hook side) and a decoupled yaw
``theta_c``. World ``x`` runs along the rail cross-section with the nominal
outer corner of the right rail flange at the origin; ``z`` points away from the
mounting plate, rail top at ``z = 0``.

Motion is kinematic: velocity-controlled axes move at the commanded rate and
force-controlled axes follow an admittance law evaluated implicitly against
the active penalty-contact stiffness, which keeps the loop stable for any
gain. Loads are kept internally as the resultant acting on the terminal in
world axes; the reported wrench is that load in the flange frame, whose Z
axis points along the joining direction (down into the rail).
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import lumped_model as lm
from .beam_model import BeamParams, forces_from_overlap
from .geometry import (
    DEFAULT_DISCONTINUITY_THRESHOLD,
    OverlapSample,
    PlanarPose,
    RailProfile,
    SnapHookProfile,
    max_deflection,
    measure_overlap,
    overlap_discontinuity,
)

log = logging.getLogger(__name__)

JOINING_MODELS = ("analytic",) + lm.VARIANTS
MM = 1e-3
DEG = math.pi / 180.0
FRICTION_SPEED = 1e-3


class ForceLimitExceeded(RuntimeError):
    pass


def default_profile() -> SnapHookProfile:
    return SnapHookProfile(l=10 * MM, b=5 * MM, h=1.5 * MM, h_k=1.0 * MM, alpha=30 * DEG, s=0.1 * MM,
                           contour="I")


@dataclass(frozen=True)
class RailConfig:
    dx: float = 0.0
    gamma: float = 0.0
    y_rail: float = 0.0

    @property
    def dx_eff(self) -> float:
        return self.dx + self.y_rail * math.tan(self.gamma)


@dataclass
class RandomizationConfig:
    """Half-widths of the uniform rail perturbations and the force-noise level."""

    dx_range: float = 5 * MM
    gamma_range: float = 3 * DEG
    force_noise: float = 0.2
    y_rail: float = 0.0
    seed: int | None = None
    gamma_center: float = 0.0  # rail yaw the perturbation is centred on

    def __post_init__(self):
        if self.dx_range < 0 or self.gamma_range < 0:
            raise ValueError("randomization ranges are symmetric half-widths and must be >= 0")
        if self.force_noise < 0:
            raise ValueError("randomization.force_noise must be >= 0")


def randomize(cfg: RandomizationConfig, rng: np.random.Generator) -> RailConfig:
    dx = float(rng.uniform(-cfg.dx_range, cfg.dx_range)) if cfg.dx_range > 0 else 0.0
    gamma = float(rng.uniform(-cfg.gamma_range, cfg.gamma_range)) if cfg.gamma_range > 0 else 0.0
    return RailConfig(dx, cfg.gamma_center + gamma, cfg.y_rail)


@dataclass
class WorldConfig:
    profile: SnapHookProfile = field(default_factory=default_profile)
    rail: RailProfile = field(default_factory=RailProfile)
    beam: BeamParams | None = None
    joining_model: str = "analytic"
    corrected: bool = True
    beam_count: float = 1.0
    lumped_dt: float = lm.DEFAULT_DT
    lumped_density: float = lm.DEFAULT_DENSITY
    control_dt: float = 0.02
    contact_stiffness: float = 1e5  # N/m
    admittance_gain: float = 5e-4  # m/(N s)
    max_speed: float = 0.05  # m/s
    force_limit: float = 50.0
    rail_friction: float = 0.1
    yaw_stiffness: float = 0.5  # N m/rad
    capture_angle: float = 5 * DEG
    latch_yaw_loss: float = 0.1
    recess_alpha_reduction: float = 5 * DEG
    hook_depth_extra: float = 1.0 * MM
    tip_margin: float = 0.1 * MM
    engage_z_tolerance: float = 0.3 * MM
    engage_x_overtravel: float = 0.5 * MM
    discontinuity_threshold: float = DEFAULT_DISCONTINUITY_THRESHOLD
    tunnel_fraction: float = 0.5
    success_position_tol: float = 0.5 * MM
    success_yaw_tol: float = 1.0 * DEG
    weights: tuple[float, float, float, float] = (1 * MM, 1 * MM, 1 * DEG, 0.25 * DEG)
    pre_offset_x: float = 6 * MM
    pre_height: float = 6 * MM
    pre_tilt: float = 10 * DEG
    home_height: float = 20 * MM
    lin_speed: float = 0.1
    safe_height: float = 4 * MM

    def __post_init__(self):
        if self.beam is None:
            self.beam = BeamParams.from_profile(self.profile)
        if self.joining_model not in JOINING_MODELS:
            raise ValueError(f"joining model must be one of {JOINING_MODELS}, got {self.joining_model!r}")
        if not 0 < self.control_dt <= 0.05:
            raise ValueError("control.dt must lie in (0, 50 ms]")
        for name in ("contact_stiffness", "admittance_gain", "force_limit", "beam_count", "max_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    # terminal geometry, terminal frame (origin at the notch)
    @property
    def snap_offset(self) -> float:
        """Horizontal distance from the notch to the snap-hook beam face."""
        return self.rail.width + self.profile.s

    @property
    def tip_depth(self) -> float:
        return self.rail.edge_height + self.profile.footprint + self.tip_margin

    @property
    def hook_depth(self) -> float:
        return self.rail.edge_height + self.hook_depth_extra

    @property
    def f_max(self) -> float:
        return max_deflection(self.profile, self.rail)[0]

    def home_pose(self) -> tuple[float, float, float, float]:
        return (self.pre_offset_x, self.home_height, 0.0, 0.0)

    def nominal_preposition(self) -> tuple[float, float, float, float]:
        return (self.pre_offset_x, self.pre_height, self.pre_tilt, 0.0)

    def d_norm(self) -> float:
        return _weighted_distance(self, self.nominal_preposition(), (0.0, 0.0, 0.0, 0.0))


@dataclass
class Wrench:
    force: tuple[float, float, float] = (0.0, 0.0, 0.0)
    moment: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array(self.force + self.moment, dtype=float)


@dataclass
class Observation:
    p_rel: np.ndarray
    quat: np.ndarray
    wrench: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p_rel, self.quat, self.wrench])


@dataclass
class Command:
    """One control-period command. Unset axes hold still.

    Velocities are world rates (m/s, rad/s). Force targets are the desired
    load on the terminal along world ``x``/``z`` (positive pushes the terminal
    toward ``+x``/``+z``). ``pose`` jumps straight to ``(x, z, theta_b, theta_c)``.
    """

    vx: float | None = None
    vz: float | None = None
    fx: float | None = None
    fz: float | None = None
    omega_b: float = 0.0
    omega_c: float = 0.0
    gain: float | None = None
    pose: tuple[float, float, float, float] | None = None


class _Load(NamedTuple):
    fx: float
    fz: float
    my: float
    kxx: float
    kzz: float
    base_normal: float


@dataclass
class WorldState:
    cfg: WorldConfig
    rail: RailConfig
    profile: SnapHookProfile
    x: float
    z: float
    theta_b: float
    theta_c: float
    budget: int = 6
    time: float = 0.0
    base_contact: bool = False
    fixed_hook_engaged: bool = False
    snap_engaged: bool = False
    snap_latched: bool = False
    tunnelled: bool = False
    failure: str | None = None
    lumped: lm.LumpedModel | None = None
    overlap: OverlapSample = OverlapSample(0.0, 0.0, 0.0)
    snap_forces: tuple[float, float] = (0.0, 0.0)
    overlap_history: list[float] = field(default_factory=list)
    peak_overlap: float = 0.0
    peak_index: int = 0
    max_overlap_step: float = 0.0
    load: _Load = _Load(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    vx: float = 0.0
    skill: str = ""
    log_rows: list | None = None

    @property
    def joining_model(self) -> str:
        return self.cfg.joining_model

    @property
    def x_edge(self) -> float:
        return self.rail.dx_eff

    def pose(self) -> tuple[float, float, float, float]:
        return (self.x, self.z, self.theta_b, self.theta_c)

    def goal(self) -> tuple[float, float, float, float]:
        return (self.x_edge, 0.0, 0.0, self.rail.gamma)


def effective_profile(cfg: WorldConfig, rail: RailConfig) -> SnapHookProfile:
    """Hook profile for this rail: the recess lowers alpha when the rail is yawed toward it."""
    p = cfg.profile
    toward = (p.recess_side == "left" and rail.gamma < 0) or (p.recess_side == "right" and rail.gamma > 0)
    if not toward:
        return p
    return dataclasses.replace(p, alpha=max(p.alpha - cfg.recess_alpha_reduction, 1 * DEG))


def make_state(cfg: WorldConfig, rail: RailConfig | None = None, budget: int = 6) -> WorldState:
    rail = rail or RailConfig()
    profile = effective_profile(cfg, rail)
    x, z, tb, tc = cfg.home_pose()
    lumped = None
    if cfg.joining_model != "analytic":
        lumped = lm.build(cfg.joining_model, profile, cfg.beam, density=cfg.lumped_density)
    st = WorldState(cfg, rail, profile, x, z, tb, tc, budget=budget, lumped=lumped)
    _refresh(st, record=False)
    return st


def _to_world(st: WorldState, px: float, pz: float) -> tuple[float, float]:
    c, s = math.cos(st.theta_b), math.sin(st.theta_b)
    return st.x + px * c + pz * s, st.z - px * s + pz * c


def hook_pose(st: WorldState) -> PlanarPose:
    """Snap-hook head frame expressed in the frame of the left flange's outer top corner."""
    cfg = st.cfg
    hx, hz = _to_world(st, -cfg.snap_offset, -cfg.tip_depth)
    lip_x = st.x_edge - cfg.rail.width
    return PlanarPose(hx - lip_x, hz, st.theta_b)


def _flange_penetration(px: float, pz: float, x0: float, x1: float, t: float, side_sign: int):
    """Penetration of a point into a flange rectangle; returns (depth, normal_x, normal_z) or None.

    ``side_sign`` says which vertical face of the flange is exposed to the
    terminal (+1: right face at x1, -1: left face at x0).
    """
    if not (x0 < px < x1 and -t <= pz <= 0.0):
        return None
    top = -pz
    side = (x1 - px) if side_sign > 0 else (px - x0)
    if top <= side:
        return top, 0.0, 1.0
    return side, float(side_sign), 0.0


def _rigid_contacts(st: WorldState):
    """Penalty contacts of base line, fixed-hook wall and snap tip with the rail flanges."""
    cfg = st.cfg
    t, d = cfg.rail.edge_height, cfg.rail.lip_depth
    xr1 = st.x_edge
    xr0 = xr1 - d
    xl0 = xr1 - cfg.rail.width
    xl1 = xl0 + d
    contacts = []  # (px, pz, depth, nx, nz, kind)

    # Base line from the notch to the snap-hook side: lowest point over each flange top.
    bx0, bz0 = _to_world(st, -cfg.snap_offset, 0.0)
    bx1, bz1 = st.x, st.z
    for f0, f1 in ((xl0, xl1), (xr0, xr1)):
        lo, hi = max(f0, bx0), min(f1, bx1)
        if lo >= hi:
            continue
        best = None
        for xq in (lo, hi):
            zq = bz0 + (bz1 - bz0) * (xq - bx0) / (bx1 - bx0) if bx1 != bx0 else min(bz0, bz1)
            if -t < zq < 0.0 and (best is None or zq < best[1]):
                best = (xq, zq)
        if best is not None:
            contacts.append((best[0], best[1], -best[1], 0.0, 1.0, "base"))

    # Fixed-hook wall against the right flange.
    hd = cfg.hook_depth
    wall = [_to_world(st, 0.0, -hd)]
    c = math.cos(st.theta_b)
    for zq in (0.0, -t):
        s_ = (st.z - zq) / c if c > 1e-9 else 0.0
        if 0.0 < s_ < hd:
            wall.append(_to_world(st, 0.0, -s_))
    deepest = None
    for px, pz in wall:
        pen = _flange_penetration(px, pz, xr0, xr1, t, +1)
        if pen is not None and (deepest is None or pen[0] > deepest[2]):
            deepest = (px, pz) + pen
    if deepest is not None:
        contacts.append(deepest + ("wall",))

    # Snap-hook tip landing on the left flange.
    tx, tz = _to_world(st, -cfg.snap_offset, -cfg.tip_depth)
    pen = _flange_penetration(tx, tz, xl0, xl1, t, -1)
    if pen is not None:
        contacts.append((tx, tz) + pen + ("tip",))
    return contacts


def _refresh(st: WorldState, record: bool = True, dt: float | None = None) -> None:
    """Re-evaluate contacts, joining forces and flags at the current pose."""
    cfg = st.cfg
    k = cfg.contact_stiffness
    fx = fz = my = kxx = kzz = base_n = 0.0
    base = wall_force = False
    for px, pz, depth, nx, nz, kind in _rigid_contacts(st):
        fn = k * depth
        fx += fn * nx
        fz += fn * nz
        my += (pz - st.z) * fn * nx - (px - st.x) * fn * nz
        kxx += k * nx * nx
        kzz += k * nz * nz
        if kind == "base" or (kind == "wall" and nz > 0):
            base = True
            base_n += fn * nz
        if kind == "wall" and nx > 0:
            wall_force = True
    if base_n > 0:
        # Coulomb friction, regularised below 1 mm/s so slow force corrections do not chatter.
        fx -= cfg.rail_friction * base_n * max(-1.0, min(1.0, st.vx / FRICTION_SPEED))

    # Snap-hook head against the left flange side.
    pose = hook_pose(st)
    sample = measure_overlap(st.profile, cfg.rail, pose)
    st.overlap = sample
    fq, fj = _joining(st, sample, dt)
    st.snap_forces = (fq, fj)
    if fq > 0 or fj > 0:
        c, s = math.cos(st.theta_b), math.sin(st.theta_b)
        # Lateral pushes the head away from the lip (-x_hook), joining resists insertion (+z_hook).
        lx, lz = -fq * c + fj * s, fq * s + fj * c
        hx, hz = _to_world(st, -cfg.snap_offset, -cfg.tip_depth + sample.xi)
        fx += lx
        fz += lz
        my += (hz - st.z) * lx - (hx - st.x) * lz
    st.load = _Load(fx, fz, my, kxx, kzz, base_n)

    # Flags.
    st.base_contact = base
    gap = st.x - st.x_edge
    yaw_ok = abs(st.theta_c - st.rail.gamma) < cfg.capture_angle
    st.fixed_hook_engaged = (
        -cfg.engage_x_overtravel <= gap <= cfg.rail.fixed_hook_clearance
        and st.z <= cfg.engage_z_tolerance and yaw_ok and (wall_force or gap >= 0.0)
    )
    if sample.deflection > 0:
        st.snap_engaged = True

    if record:
        h = st.overlap_history
        f = sample.deflection
        if h:
            st.max_overlap_step = max(st.max_overlap_step, abs(f - h[-1]))
        h.append(f)
        if f > st.peak_overlap:
            st.peak_overlap = f
            st.peak_index = len(h) - 1
            if st.max_overlap_step > cfg.discontinuity_threshold:
                st.tunnelled = True
    _update_latch(st, pose)

    if record and st.log_rows is not None:
        w = contact_wrench(st)
        st.log_rows.append((st.time, st.x, st.z, st.theta_b, st.theta_c) + w.force + w.moment
                           + (st.skill, reward(st)))


def _update_latch(st: WorldState, pose: PlanarPose) -> None:
    cfg = st.cfg
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dx, dz = 0.0 - pose.x, -cfg.rail.edge_height - pose.z
    u_bot, xi_bot = c * dx - s * dz, s * dx + c * dz
    geometric = (st.fixed_hook_engaged and xi_bot >= st.profile.footprint and u_bot < st.profile.h_k
                 and abs(st.theta_b) < 2 * DEG)
    if not geometric:
        if st.snap_latched and st.z > cfg.engage_z_tolerance:
            st.snap_latched = False
        return
    if st.snap_latched:
        return
    if st.peak_overlap >= cfg.tunnel_fraction * cfg.f_max and not st.tunnelled:
        st.snap_latched = True
    else:
        st.tunnelled = True


def _joining(st: WorldState, sample: OverlapSample, dt: float | None) -> tuple[float, float]:
    cfg = st.cfg
    try:
        if st.lumped is None:
            res = forces_from_overlap(sample.deflection, sample.flank_angle, sample.xi, st.profile, cfg.beam,
                                      corrected=cfg.corrected, stiffness_scale=cfg.beam_count)
            return res.lateral, res.joining
        if dt is None:
            return st.snap_forces
        n = max(1, round(dt / cfg.lumped_dt))
        res = (0.0, 0.0)
        for _ in range(n):
            _, res = lm.step(st.lumped, sample.deflection, sample.flank_angle, cfg.beam.mu0, dt / n)
        return res[0] * cfg.beam_count, res[1] * cfg.beam_count
    except ValueError as exc:
        if "self-locking" in str(exc):
            st.failure = "force limit exceeded"
            raise ForceLimitExceeded(f"force limit exceeded: {exc}") from exc
        raise


def contact_wrench(st: WorldState) -> Wrench:
    """Load on the terminal in the flange frame (X along world x, Z along the joining direction)."""
    fx, fz, my = st.load.fx, st.load.fz, st.load.my
    mc = 0.0
    if st.fixed_hook_engaged or st.snap_latched:
        mc = -st.cfg.yaw_stiffness * (st.theta_c - st.rail.gamma)
    return Wrench((fx, 0.0, -fz), (0.0, -my, mc))


def _quat(theta_b: float, theta_c: float) -> np.ndarray:
    cb, sb = math.cos(theta_b / 2), math.sin(theta_b / 2)
    cc, sc = math.cos(theta_c / 2), math.sin(theta_c / 2)
    # yaw about z composed with pitch about y: q_z * q_y
    return np.array([cc * cb, -sc * sb, cc * sb, sc * cb])


def sense(st: WorldState, rng: np.random.Generator | None, noise: float = 0.2) -> Observation:
    w = contact_wrench(st).as_array()
    if rng is not None and noise > 0:
        w[:3] += rng.normal(0.0, noise, size=3)
    q = _quat(st.theta_b, st.theta_c)
    return Observation(np.array([st.x, 0.0, st.z]), q / np.linalg.norm(q), w)


def step_control(st: WorldState, cmd: Command, dt: float | None = None) -> WorldState:
    """Advance one control period; raises ForceLimitExceeded when the load passes the safety limit."""
    cfg = st.cfg
    dt = cfg.control_dt if dt is None else dt
    if not 0 < dt <= 0.05:
        raise ValueError(f"control period must lie in (0, 50 ms], got {dt!r}")
    if st.failure:
        raise ForceLimitExceeded(st.failure)

    if cmd.pose is not None:
        st.x, st.z, st.theta_b, st.theta_c = cmd.pose
        st.vx = 0.0
    else:
        gain = cfg.admittance_gain if cmd.gain is None else cmd.gain
        ld = st.load
        vmax = cfg.max_speed
        if cmd.fx is not None:
            vx = -gain * (cmd.fx - ld.fx) / (1.0 + gain * dt * ld.kxx)
        else:
            vx = cmd.vx or 0.0
        if cmd.fz is not None:
            vz = -gain * (cmd.fz - ld.fz) / (1.0 + gain * dt * ld.kzz)
        else:
            vz = cmd.vz or 0.0
        vx = min(max(vx, -vmax), vmax) if cmd.fx is not None else vx
        vz = min(max(vz, -vmax), vmax) if cmd.fz is not None else vz
        wc = cmd.omega_c * ((1.0 - cfg.latch_yaw_loss) if st.snap_latched else 1.0)
        st.x += vx * dt
        st.z += vz * dt
        st.theta_b += cmd.omega_b * dt
        st.theta_c += wc * dt
        st.vx = vx
    st.time += dt
    if not all(math.isfinite(v) for v in st.pose()):
        raise ValueError(f"non-finite terminal pose {st.pose()}")
    _refresh(st, dt=dt)

    mag = math.hypot(st.load.fx, st.load.fz)
    if mag > cfg.force_limit:
        st.failure = "force limit exceeded"
        raise ForceLimitExceeded(f"force limit exceeded: |F| = {mag:.1f} N > {cfg.force_limit:.1f} N")
    return st


def _weighted_distance(cfg: WorldConfig, pose, goal) -> float:
    return math.sqrt(sum(((p - g) / w) ** 2 for p, g, w in zip(pose, goal, cfg.weights)))


def distance(st: WorldState) -> float:
    return _weighted_distance(st.cfg, st.pose(), st.goal())


def is_success(st: WorldState) -> bool:
    cfg = st.cfg
    gx, gz, _, gc = st.goal()
    return (st.snap_latched and abs(st.theta_c - gc) < cfg.success_yaw_tol
            and math.hypot(st.x - gx, st.z - gz) < cfg.success_position_tol)


def reward(st: WorldState) -> float:
    if is_success(st):
        return 0.0
    # Saturates at -1 from d_norm outward, so no step is worse than a failure.
    return -min(1.0, abs(distance(st)) / abs(st.cfg.d_norm()))


def tunnelling_detected(st: WorldState) -> bool:
    """Discontinuity test over the overlap history up to its peak (the snap release follows the peak)."""
    h = st.overlap_history
    if len(h) < 2:
        return st.tunnelled
    return st.tunnelled or overlap_discontinuity(h[: max(st.peak_index + 1, 2)], st.cfg.discontinuity_threshold)


LOG_COLUMNS = ("t", "x", "z", "theta_b", "theta_c", "Fx", "Fy", "Fz", "Mx", "My", "Mz", "skill", "reward")
