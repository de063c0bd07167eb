"""Scripted force traces for comparing joining models on one trajectory."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import skills as S
from . import world as W
from .geometry import _to_hook


@dataclass
class ForceTrace:
    model: str
    steps: np.ndarray
    time: np.ndarray
    progress: np.ndarray  # lip corner position along the head, m
    deflection: np.ndarray  # measured overlap f, m
    F_Q: np.ndarray
    F_J: np.ndarray
    skill: list
    latched: np.ndarray
    success: bool

    @property
    def snap_in_step(self) -> int | None:
        """First control step with the hook latched."""
        idx = np.flatnonzero(self.latched)
        return int(idx[0]) if idx.size else None

    @property
    def peak_step(self) -> int:
        return int(np.argmax(self.F_Q))

    def pre_apex(self) -> np.ndarray:
        """Mask of loaded steps up to and including the lateral-force peak."""
        m = np.zeros(len(self.steps), dtype=bool)
        m[: self.peak_step + 1] = True
        return m & (self.F_Q > 0)


def force_trace(world_cfg: W.WorldConfig | None = None, model: str | None = None, rail: W.RailConfig | None = None,
                action=None) -> ForceTrace:
    """Run ``action`` (the nominal terminal macro by default) and record one row per control step."""
    cfg = world_cfg or W.WorldConfig()
    if model is not None:
        cfg = replace(cfg, joining_model=model)
    st = W.make_state(cfg, rail or W.RailConfig(), budget=1)
    out = S.execute_action(st, action if action is not None else S.nominal_action())

    rows = []
    for lg in out.logs:
        for pose, fl, f, latched in zip(lg.poses, lg.snap_forces, lg.overlap, lg.latched):
            rows.append((lg.name, pose, fl, f, latched))
    n = len(rows)
    progress = np.empty(n)
    probe = W.make_state(cfg, st.rail, budget=1)
    for i, (_, pose, _, _, _) in enumerate(rows):
        probe.x, probe.z, probe.theta_b, probe.theta_c = pose
        progress[i] = _to_hook(W.hook_pose(probe), 0.0, 0.0)[1]
    return ForceTrace(
        model=cfg.joining_model,
        steps=np.arange(n),
        time=np.arange(1, n + 1) * cfg.control_dt,
        progress=progress,
        deflection=np.array([r[3] for r in rows]),
        F_Q=np.array([r[2][0] for r in rows]),
        F_J=np.array([r[2][1] for r in rows]),
        skill=[r[0] for r in rows],
        latched=np.array([r[4] for r in rows], dtype=bool),
        success=out.success,
    )


def compare_models(variants, world_cfg: W.WorldConfig | None = None, rail: W.RailConfig | None = None) -> dict:
    if not variants:
        raise ValueError("need at least one joining model to compare")
    return {v: force_trace(world_cfg, v, rail) for v in variants}


def relative_fj_error(ref: ForceTrace, other: ForceTrace) -> float:
    """Largest relative F_J deviation over the reference's pre-apex loaded steps, aligned by step."""
    n = min(len(ref.steps), len(other.steps))
    m = ref.pre_apex()[:n]
    if not m.any():
        return 0.0
    a, b = ref.F_J[:n][m], other.F_J[:n][m]
    return float(np.max(np.abs(b - a) / np.maximum(np.abs(a), 1e-12)))
