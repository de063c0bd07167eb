"""Parameterizable, monitored assembly skills and the bounded skill sequencer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import world as W
from .world import DEG, MM, Command, ForceLimitExceeded, WorldState

STOP_REASONS = ("goal_monitor", "contact_detected", "timeout", "force_limit")
DEFAULT_TIMEOUT = 10.0
TUNNEL_PENALTY = -2.0


@dataclass(frozen=True)
class SkillSpec:
    """The 7-tuple describing one skill: name, frames, tasks, scripts, monitors, transitions, sub-skills."""

    name: str
    frames: tuple[str, ...]
    tasks: tuple[str, ...]
    scripts: tuple[str, ...]
    monitors: tuple[str, ...]
    transitions: tuple[tuple[str, str], ...] = ()
    sub_skills: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.monitors:
            raise ValueError(f"skill {self.name!r} needs at least one monitor")


SKILLS = {
    "lin": SkillSpec("lin", ("world", "tcp"), ("x: velocity", "z: velocity", "b: velocity"),
                     ("retract", "move"), ("goal_monitor", "force_limit", "timeout")),
    "approach": SkillSpec("approach", ("world", "tcp"), ("z: velocity", "z: force"), ("descend", "settle"),
                          ("contact_detected", "goal_monitor", "force_limit", "timeout")),
    "slide": SkillSpec("slide", ("world", "tcp"), ("x: velocity", "z: force"), ("slide",),
                       ("contact_detected", "goal_monitor", "force_limit", "timeout")),
    "pivot": SkillSpec("pivot", ("rail corner", "tcp"), ("b: velocity", "c: velocity", "x: force", "z: force"),
                       ("rotate_b", "rotate_c"), ("goal_monitor", "contact_detected", "force_limit", "timeout")),
    "terminal": SkillSpec("terminal", ("world",), (), (), ("sub_skill_monitors",),
                          (("lin", "approach"), ("approach", "slide"), ("slide", "pivot"), ("pivot", "pivot")),
                          ("lin", "approach", "slide", "pivot", "pivot")),
}


def _check_acyclic(specs: dict) -> None:
    def visit(name, path):
        if name in path:
            raise ValueError(f"cyclic sub-skill graph through {name!r}")
        for sub in specs[name].sub_skills if name in specs else ():
            visit(sub, path | {name})

    for n in specs:
        visit(n, frozenset())


_check_acyclic(SKILLS)


# (name, low, high) in SI units; the order is the order of the raw action vector.
LIN_RANGES = (("dp_x", -25 * MM, 25 * MM), ("phi_b", -5 * DEG, 5 * DEG))
APPROACH_RANGES = (("v_z", 2 * MM, 20 * MM), ("f_z", 3.0, 15.0))
SLIDE_RANGES = (("v", 1 * MM, 10 * MM), ("f_slide", 1.0, 30.0), ("f_target", 1.0, 15.0), ("c_pd", 1e-4, 1e-3))
PIVOT_RANGES = (("phi_b", -30 * DEG, 30 * DEG), ("omega", 0.02, 0.5), ("phi_c", -20 * DEG, 20 * DEG),
                ("f_x", 3.0, 30.0), ("f_z", 3.0, 30.0))
RANGES = {"lin": LIN_RANGES, "approach": APPROACH_RANGES, "slide": SLIDE_RANGES, "pivot": PIVOT_RANGES}
N_PARAMS = sum(len(r) for r in RANGES.values())  # 13


def configure_ranges(overrides: dict) -> dict:
    """Replace parameter bounds, e.g. ``{"pivot": {"omega": (0.05, 0.3)}}``; returns the previous table."""
    previous = dict(RANGES)
    for skill, params in overrides.items():
        if skill not in RANGES:
            raise ValueError(f"unknown skill {skill!r}")
        known = {n: (lo, hi) for n, lo, hi in RANGES[skill]}
        for name, (lo, hi) in params.items():
            if name not in known:
                raise ValueError(f"unknown parameter {skill}.{name}")
            if not lo < hi:
                raise ValueError(f"{skill}.{name}: lower bound {lo!r} must be below upper bound {hi!r}")
            known[name] = (float(lo), float(hi))
        RANGES[skill] = tuple((n, *known[n]) for n, _, _ in RANGES[skill])
    return previous


def restore_ranges(previous: dict) -> None:
    RANGES.clear()
    RANGES.update(previous)
PIVOT_SLICE = slice(8, 13)


def from_unit(u: float, lo: float, hi: float) -> float:
    return lo + (u + 1.0) * 0.5 * (hi - lo)


def to_unit(v: float, lo: float, hi: float) -> float:
    return 2.0 * (v - lo) / (hi - lo) - 1.0


@dataclass(frozen=True)
class SkillParams:
    skill: str
    values: dict

    def __post_init__(self):
        ranges = RANGES[self.skill]
        if set(self.values) != {n for n, _, _ in ranges}:
            raise ValueError(f"{self.skill} parameters must be exactly {[n for n, _, _ in ranges]}")
        for name, lo, hi in ranges:
            v = self.values[name]
            if not lo - 1e-12 * max(1.0, abs(lo)) <= v <= hi + 1e-12 * max(1.0, abs(hi)):
                raise ValueError(f"{self.skill}.{name}={v!r} outside [{lo}, {hi}]")

    def __getitem__(self, name):
        return self.values[name]

    @classmethod
    def from_unit(cls, skill: str, u: Sequence[float]) -> "SkillParams":
        ranges = RANGES[skill]
        return cls(skill, {n: from_unit(float(x), lo, hi) for (n, lo, hi), x in zip(ranges, u)})

    def to_unit(self) -> np.ndarray:
        return np.array([to_unit(self.values[n], lo, hi) for n, lo, hi in RANGES[self.skill]])


@dataclass
class Action:
    selector: float
    u: np.ndarray

    @classmethod
    def from_array(cls, a) -> "Action":
        a = np.asarray(a, dtype=float)
        if a.shape != (N_PARAMS + 1,):
            raise ValueError(f"action must have {N_PARAMS + 1} components, got shape {a.shape}")
        return cls(float(a[0]), a[1:].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.selector], self.u])


@dataclass
class Teleport:
    """Scripted pose jump, executed as a single control period (used to script tunnelling)."""

    pose: tuple[float, float, float, float]


def decode_action(a: Action) -> tuple[str, dict]:
    arr = a.as_array()
    if arr.shape != (N_PARAMS + 1,) or not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > 1.0):
        raise ValueError(f"unnormalized action: components must lie in [-1, 1], got {arr}")
    u = a.u
    if a.selector < 0:
        return "terminal", {
            "lin": SkillParams.from_unit("lin", u[0:2]),
            "approach": SkillParams.from_unit("approach", u[2:4]),
            "slide": SkillParams.from_unit("slide", u[4:8]),
            "pivot": SkillParams.from_unit("pivot", u[PIVOT_SLICE]),
        }
    return "pivot", {"pivot": SkillParams.from_unit("pivot", u[PIVOT_SLICE])}


def encode_action(choice: str, params: dict) -> Action:
    """Inverse of decode_action; unused slots of a standalone pivot are zero."""
    u = np.zeros(N_PARAMS)
    if choice == "terminal":
        u[0:2] = params["lin"].to_unit()
        u[2:4] = params["approach"].to_unit()
        u[4:8] = params["slide"].to_unit()
    u[PIVOT_SLICE] = params["pivot"].to_unit()
    return Action(-1.0 if choice == "terminal" else 1.0, u)


@dataclass
class SkillLog:
    name: str
    stop_reason: str = ""
    t_start: float = 0.0
    t_end: float = 0.0
    poses: list = field(default_factory=list)
    wrenches: list = field(default_factory=list)  # (Fx, Fz) load on the terminal, world axes
    snap_forces: list = field(default_factory=list)  # (F_Q, F_J)
    overlap: list = field(default_factory=list)
    latched: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.poses)


class _Runner:
    """Steps the world and records the trace; converts safety stops into a stop reason."""

    def __init__(self, st: WorldState, name: str, timeout: float):
        self.st, self.timeout = st, timeout
        self.log = SkillLog(name, t_start=st.time)
        self.deadline = st.time + timeout
        st.skill = name

    def expired(self) -> bool:
        return self.st.time >= self.deadline - 1e-9

    def tick(self, cmd: Command) -> None:
        st = self.st
        W.step_control(st, cmd)
        self.log.poses.append(st.pose())
        self.log.wrenches.append((st.load.fx, st.load.fz))
        self.log.snap_forces.append(st.snap_forces)
        self.log.overlap.append(st.overlap.deflection)
        self.log.latched.append(st.snap_latched)

    def load(self) -> float:
        return math.hypot(self.st.load.fx, self.st.load.fz)


def _toward(cur: float, target: float, rate: float, dt: float) -> float:
    d = target - cur
    step = rate * dt
    return d / dt if abs(d) <= step else math.copysign(rate, d)


def _lin(r: _Runner, p: SkillParams) -> str:
    st, cfg = r.st, r.st.cfg
    if st.snap_latched:
        # The latched snap-hook holds the terminal; any free-space move tears at it.
        st.failure = "force limit exceeded"
        raise ForceLimitExceeded("force limit exceeded: linear move from a latched state")
    tx = cfg.pre_offset_x + p["dp_x"]
    tz = cfg.pre_height
    tb = cfg.pre_tilt + p["phi_b"]
    dt, v, w = cfg.control_dt, cfg.lin_speed, 1.0
    safe = max(st.z, tz)
    retracted = False
    while not r.expired():
        retracted = retracted or st.z >= safe - 0.1 * MM
        if not retracted:
            cmd = Command(vx=0.0, vz=_toward(st.z, safe, v, dt))
        else:
            cmd = Command(vx=_toward(st.x, tx, v, dt), vz=_toward(st.z, tz, v, dt),
                          omega_b=_toward(st.theta_b, tb, w, dt))
        if abs(st.x - tx) < 0.1 * MM and abs(st.z - tz) < 0.1 * MM and abs(st.theta_b - tb) < 0.1 * DEG:
            return "goal_monitor"
        r.tick(cmd)
    return "timeout"


def _approach(r: _Runner, p: SkillParams, travel_limit: float = 25 * MM) -> str:
    st, cfg = r.st, r.st.cfg
    baseline = r.load()
    z0 = st.z
    while not r.expired():
        if r.load() - baseline > 2.0:
            break
        if z0 - st.z >= travel_limit:
            return "goal_monitor"
        r.tick(Command(vx=0.0, vz=-p["v_z"]))
    else:
        return "timeout"
    settled = 0
    while not r.expired() and settled < 3:
        r.tick(Command(vx=0.0, fz=p["f_z"]))
        settled = settled + 1 if abs(st.load.fz - p["f_z"]) < 0.5 else 0
    return "contact_detected" if settled >= 3 else "timeout"


def _slide(r: _Runner, p: SkillParams, travel_limit: float = 15 * MM) -> str:
    st = r.st
    x0 = st.x
    stop = max(p["f_target"], 2.0)
    while not r.expired():
        if abs(st.load.fx) >= stop:
            return "contact_detected"
        if x0 - st.x >= travel_limit:
            return "goal_monitor"
        r.tick(Command(vx=-p["v"], fz=p["f_slide"], gain=p["c_pd"]))
    return "timeout"


def _pivot(r: _Runner, p: SkillParams, use_b: bool = True, use_c: bool = True, stall_time: float = 0.5) -> str:
    st, cfg = r.st, r.st.cfg
    omega = p["omega"]
    if use_b and not st.snap_latched and p["phi_b"] != 0.0:
        start = st.theta_b
        target = start + p["phi_b"]
        if start >= 0.0 > target:
            target = 0.0
        target = min(max(target, -30 * DEG), 30 * DEG)
        best, since = abs(st.theta_b - target), 0.0
        while abs(st.theta_b - target) >= 0.1 * DEG:
            if r.expired():
                return "timeout"
            wb = _toward(st.theta_b, target, omega, cfg.control_dt)
            r.tick(Command(fx=p["f_x"], fz=p["f_z"], omega_b=wb))
            err = abs(st.theta_b - target)
            if err < best - 1e-6:
                best, since = err, 0.0
            else:
                since += cfg.control_dt
                if since >= stall_time:
                    return "contact_detected"
        st.theta_b = target if abs(st.theta_b - target) < 1e-9 else st.theta_b
    if use_c and p["phi_c"] != 0.0:
        scale = (1.0 - cfg.latch_yaw_loss) if st.snap_latched else 1.0
        target = st.theta_c + scale * p["phi_c"]
        while abs(st.theta_c - target) >= 1e-4 * DEG:
            if r.expired():
                return "timeout"
            # the commanded rate is realized scaled when latched
            wc = _toward(st.theta_c, target, omega * scale, cfg.control_dt) / scale
            r.tick(Command(fx=p["f_x"], fz=p["f_z"], omega_c=wc))
    return "goal_monitor"


_EXEC = {"lin": _lin, "approach": _approach, "slide": _slide, "pivot": _pivot}


def exec_skill(st: WorldState, skill: str, params: SkillParams, timeout: float = DEFAULT_TIMEOUT,
               **kwargs) -> tuple[WorldState, SkillLog, str]:
    if skill not in _EXEC:
        raise ValueError(f"unknown skill {skill!r}")
    r = _Runner(st, skill, timeout)
    try:
        reason = _EXEC[skill](r, params, **kwargs)
    except ForceLimitExceeded:
        reason = "force_limit"
    r.log.stop_reason = reason
    r.log.t_end = st.time
    return st, r.log, reason


@dataclass
class StepOutcome:
    choice: str
    logs: list
    stop_reason: str
    reward: float
    success: bool
    failed: bool
    penalty: float = 0.0


def execute_action(st: WorldState, action, timeout: float = DEFAULT_TIMEOUT) -> StepOutcome:
    """Run one macro action (terminal sequence, standalone pivot or scripted teleport)."""
    if st.budget <= 0:
        raise ValueError("skill budget exhausted")
    tunnelled_before = st.tunnelled
    logs = []
    if isinstance(action, Teleport):
        choice = "teleport"
        r = _Runner(st, "teleport", timeout)
        try:
            r.tick(Command(pose=tuple(action.pose)))
            reason = "goal_monitor"
        except ForceLimitExceeded:
            reason = "force_limit"
        r.log.stop_reason, r.log.t_end = reason, st.time
        logs.append(r.log)
    else:
        if not isinstance(action, Action):
            action = Action.from_array(action)
        choice, params = decode_action(action)
        if choice == "terminal":
            piv = params["pivot"]
            pitch_only = SkillParams("pivot", {**piv.values, "phi_c": 0.0})
            plan = [("lin", params["lin"], {}), ("approach", params["approach"], {}),
                    ("slide", params["slide"], {}), ("pivot", pitch_only, {"use_c": False}),
                    ("pivot", piv, {"use_b": False})]
        else:
            plan = [("pivot", params["pivot"], {})]
        reason = "goal_monitor"
        for name, p, kw in plan:
            _, lg, reason = exec_skill(st, name, p, timeout, **kw)
            logs.append(lg)
            if reason == "force_limit":
                break
    st.budget -= 1
    success = W.is_success(st)
    failed = reason == "force_limit"
    rew = W.reward(st)
    penalty = 0.0
    if W.tunnelling_detected(st) and not tunnelled_before:
        st.tunnelled = True
        penalty = TUNNEL_PENALTY
    return StepOutcome(choice, logs, reason, rew + penalty, success, failed, penalty)


@dataclass
class EpisodeResult:
    success: bool
    rewards: list
    steps: list
    tunnelled: bool
    failure: str | None

    @property
    def n_skills(self) -> int:
        return len(self.steps)

    @property
    def n_sub_skills(self) -> int:
        return sum(len(s.logs) for s in self.steps)


def run_sequence(st: WorldState, policy: Callable, N: int = 6, rng: np.random.Generator | None = None,
                 noise: float | None = None, timeout: float = DEFAULT_TIMEOUT) -> EpisodeResult:
    """Query ``policy(observation)`` and execute its actions until success, failure or ``N`` actions."""
    if N < 1:
        raise ValueError("N must be >= 1")
    st.budget = min(st.budget, N) if st.budget > 0 else N
    steps = []
    noise = 0.0 if noise is None else noise
    while st.budget > 0:
        obs = W.sense(st, rng, noise)
        out = execute_action(st, policy(obs), timeout)
        steps.append(out)
        if out.success or out.failed:
            break
    return EpisodeResult(W.is_success(st), [s.reward for s in steps], steps, st.tunnelled, st.failure)


def nominal_action() -> Action:
    """Hand-tuned terminal macro that assembles on the nominal rail."""
    params = {
        "lin": SkillParams("lin", {"dp_x": 0.0, "phi_b": 0.0}),
        "approach": SkillParams("approach", {"v_z": 10 * MM, "f_z": 8.0}),
        "slide": SkillParams("slide", {"v": 5 * MM, "f_slide": 8.0, "f_target": 8.0, "c_pd": 5e-4}),
        "pivot": SkillParams("pivot", {"phi_b": -15 * DEG, "omega": 0.1, "phi_c": 0.0, "f_x": 8.0, "f_z": 12.0}),
    }
    return encode_action("terminal", params)
