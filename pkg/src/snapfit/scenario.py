"""Scenario files: TOML in mm, degrees, N and seconds, converted to SI on load.

Every key is declared in the tables below; anything else is rejected with its
dotted key path so a typo never silently falls back to a default.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import tomli

from . import skills as S
from .beam_model import BeamParams
from .geometry import RailProfile
from .rl.train import GridSpec, TrainConfig
from .world import DEG, JOINING_MODELS, MM, RandomizationConfig, WorldConfig, default_profile

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}")
        self.key_path = key_path


# key -> (target field, kind). A float kind is the factor from file units to SI.
HOOK = {"l": ("l", MM), "b": ("b", MM), "h": ("h", MM), "h_k": ("h_k", MM), "alpha_deg": ("alpha", DEG),
        "s": ("s", MM), "contour": ("contour", str), "plateau_length": ("plateau_length", MM),
        "ramp_length": ("ramp_length", MM), "recess_side": ("recess_side", str)}
RAIL = {"width": ("width", MM), "edge_height": ("edge_height", MM), "lip_depth": ("lip_depth", MM),
        "fixed_hook_clearance": ("fixed_hook_clearance", MM)}
BEAM = {"E_S_GPa": ("E_S", 1e9), "mu0": ("mu0", 1.0), "corrected": ("corrected", bool),
        "l_eff_mode": ("l_eff_mode", str), "count": ("beam_count", 1.0)}
LUMPED = {"variant": ("joining_model", str), "dt_us": ("lumped_dt", 1e-6), "density": ("lumped_density", 1.0)}
RANDOMIZATION = {"dx_range": ("dx_range", MM), "gamma_range_deg": ("gamma_range", DEG),
                 "gamma_center_deg": ("gamma_center", DEG), "force_noise": ("force_noise", 1.0),
                 "y_rail": ("y_rail", MM), "seed": ("seed", int)}
SUCCESS = {"position_tol": ("success_position_tol", MM), "yaw_tol_deg": ("success_yaw_tol", DEG),
           "tunnel_threshold": ("discontinuity_threshold", MM), "capture_angle_deg": ("capture_angle", DEG)}
CONTROL = {"dt": ("control_dt", 1.0), "contact_stiffness": ("contact_stiffness", 1e3),
           "admittance_gain": ("admittance_gain", 1e-3), "max_speed": ("max_speed", MM),
           "force_limit": ("force_limit", 1.0), "rail_friction": ("rail_friction", 1.0),
           "yaw_stiffness": ("yaw_stiffness", 1e-3 / DEG)}
TRAIN = {"steps": ("total_skills", int), "eval_period": ("eval_period", int),
         "eval_rollouts": ("eval_rollouts", int), "seeds": ("seeds", list), "n_skills": ("n_skills", int),
         "algorithm": ("algorithm", str), "gamma": ("gamma", 1.0), "lr": ("lr", 1.0), "tau": ("tau", 1.0),
         "buffer_size": ("buffer_size", int), "batch_size": ("batch_size", int),
         "learning_starts": ("learning_starts", int), "updates_per_skill": ("updates_per_skill", int),
         "hidden": ("hidden", int)}
GRID = {"yaws_deg": ("yaws_deg", list), "positions_mm": ("positions_mm", list), "rollouts": ("rollouts", int),
        "dx_range_mm": ("dx_range_mm", 1.0), "seed": ("seed", int)}
SKILL_UNITS = {
    "lin": {"dp_x": MM, "phi_b": DEG},
    "approach": {"v_z": MM, "f_z": 1.0},
    "slide": {"v": MM, "f_slide": 1.0, "f_target": 1.0, "c_pd": 1e-3},
    "pivot": {"phi_b": DEG, "omega": DEG, "phi_c": DEG, "f_x": 1.0, "f_z": 1.0},
}
SECTIONS = ("scenario", "hook", "rail", "beam", "lumped", "randomization", "success", "control", "skills",
            "train", "grid")


@dataclass
class Scenario:
    world: WorldConfig = field(default_factory=WorldConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    skill_ranges: dict = field(default_factory=dict)
    name: str = "default"
    sha256: str = hashlib.sha256(b"").hexdigest()
    path: str | None = None

    @property
    def n_skills(self) -> int:
        return self.train.n_skills

    def apply_skill_ranges(self) -> dict:
        return S.configure_ranges(self.skill_ranges)


def _convert(path: str, value, kind):
    if kind is str:
        if not isinstance(value, str):
            raise ScenarioError(path, f"expected a string, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ScenarioError(path, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(path, f"expected an integer, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                  for v in value):
            raise ScenarioError(path, f"expected a list of numbers, got {value!r}")
        return tuple(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    return float(value) * kind


def _section(doc: dict, name: str, schema: dict) -> dict:
    table = doc.get(name, {})
    if not isinstance(table, dict):
        raise ScenarioError(name, "expected a table")
    out = {}
    for key, value in table.items():
        if key not in schema:
            raise ScenarioError(f"{name}.{key}", "unknown key")
        target, kind = schema[key]
        out[target] = _convert(f"{name}.{key}", value, kind)
    return out


def _build(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from None


def _skill_ranges(doc: dict) -> dict:
    table = doc.get("skills", {})
    if not isinstance(table, dict):
        raise ScenarioError("skills", "expected a table")
    out = {}
    for skill, params in table.items():
        if skill not in SKILL_UNITS:
            raise ScenarioError(f"skills.{skill}", "unknown skill")
        if not isinstance(params, dict):
            raise ScenarioError(f"skills.{skill}", "expected a table")
        for key, bounds in params.items():
            path = f"skills.{skill}.{key}"
            if key not in SKILL_UNITS[skill]:
                raise ScenarioError(path, "unknown key")
            vals = _convert(path, bounds, list)
            if len(vals) != 2:
                raise ScenarioError(path, "expected [low, high]")
            lo, hi = vals
            if not lo < hi:
                raise ScenarioError(path, f"low bound {lo} must be below high bound {hi}")
            f = SKILL_UNITS[skill][key]
            out.setdefault(skill, {})[key] = (lo * f, hi * f)
    return out


def parse_scenario(text: str, origin: str = "<scenario>") -> Scenario:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(origin, f"not valid TOML: {exc}") from None
    for key in doc:
        if key not in SECTIONS:
            raise ScenarioError(key, "unknown section")

    meta = doc.get("scenario", {})
    for key in meta:
        if key not in ("version", "name"):
            raise ScenarioError(f"scenario.{key}", "unknown key")
    version = meta.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError("scenario.version", f"unsupported schema version {version!r}; expected {SCHEMA_VERSION}")

    base = default_profile()
    hook = _build("hook", replace, base, **_section(doc, "hook", HOOK))
    rail = _build("rail", RailProfile, **_section(doc, "rail", RAIL))

    beam_kw = _section(doc, "beam", BEAM)
    corrected = beam_kw.pop("corrected", True)
    beam_count = beam_kw.pop("beam_count", 1.0)
    beam = _build("beam", BeamParams.from_profile, hook, **beam_kw)

    world_kw = dict(profile=hook, rail=rail, beam=beam, corrected=corrected, beam_count=beam_count)
    world_kw.update(_section(doc, "lumped", LUMPED))
    if world_kw.get("joining_model", "analytic") not in JOINING_MODELS:
        raise ScenarioError("lumped.variant", f"must be one of {JOINING_MODELS}")
    world_kw.update(_section(doc, "success", SUCCESS))
    world_kw.update(_section(doc, "control", CONTROL))
    world = _build("control", WorldConfig, **world_kw)

    rand = _build("randomization", RandomizationConfig, **_section(doc, "randomization", RANDOMIZATION))
    train = _build("train", TrainConfig, **_section(doc, "train", TRAIN))
    grid = _build("grid", GridSpec, **_section(doc, "grid", GRID))
    return Scenario(world, rand, train, grid, _skill_ranges(doc), meta.get("name", "default"),
                    hashlib.sha256(text.encode()).hexdigest())


def load_scenario(path=None) -> Scenario:
    """Load ``path``; ``None`` gives the built-in defaults (hash of the empty file)."""
    if path is None:
        return parse_scenario("")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(str(p), f"cannot read scenario: {exc.strerror}") from None
    sc = parse_scenario(text, str(p))
    sc.path = str(p)
    return sc
