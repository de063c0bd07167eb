"""Skill-level environment: one step executes one macro action."""
from __future__ import annotations

import numpy as np

from .. import skills as S
from .. import world as W

OBS_DIM = 13
ACT_DIM = S.N_PARAMS + 1
# Fixed observation scaling: position (m), quaternion, force (N), moment (N m).
OBS_SCALE = np.array([0.01] * 3 + [1.0] * 4 + [10.0] * 3 + [0.1, 0.1, 0.01])
OBS_CLIP = 10.0


def normalize(obs: np.ndarray) -> np.ndarray:
    return np.clip(obs / OBS_SCALE, -OBS_CLIP, OBS_CLIP)


class SnapFitEnv:
    """Gym-style environment over the assembly world.

    Rail pose is re-randomized on every reset. A force-limit failure ends the
    episode with the worst step reward (-1) counted for itself and every
    unused skill, so aborting is never cheaper than trying.
    """

    def __init__(self, world_cfg: W.WorldConfig | None = None, rand: W.RandomizationConfig | None = None,
                 n_skills: int = 6, seed: int | None = None):
        self.world_cfg = world_cfg or W.WorldConfig()
        self.rand = rand or W.RandomizationConfig()
        self.n_skills = n_skills
        self.rng = np.random.default_rng(seed if seed is not None else self.rand.seed)
        self.state: W.WorldState | None = None
        self.done = True
        self.log_rows: list | None = None

    def reset(self, seed: int | None = None, rail: W.RailConfig | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        rail = rail or W.randomize(self.rand, self.rng)
        self.state = W.make_state(self.world_cfg, rail, budget=self.n_skills)
        if self.log_rows is not None:
            self.state.log_rows = self.log_rows
        self.done = False
        self.skills_used = 0
        return self._observe()

    def _observe(self) -> np.ndarray:
        return W.sense(self.state, self.rng, self.rand.force_noise).as_array()

    def step(self, action):
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        a = np.asarray(action, dtype=float)
        out = S.execute_action(self.state, a if a.shape == () else S.Action.from_array(a))
        self.skills_used += 1
        r = out.reward
        if out.failed:
            r = -1.0 * (1 + self.state.budget) + out.penalty
        truncated = not (out.success or out.failed) and self.state.budget <= 0
        self.done = out.success or out.failed or truncated
        cause = "success" if out.success else ("force_limit" if out.failed else ("budget" if truncated else ""))
        info = {"stop_reason": out.stop_reason, "skills_used": self.skills_used, "success": out.success,
                "truncated": truncated, "terminal": out.success or out.failed, "cause": cause,
                "choice": out.choice, "sub_skills": len(out.logs), "penalty": out.penalty,
                "tunnelled": self.state.tunnelled}
        return self._observe(), r, self.done, info
