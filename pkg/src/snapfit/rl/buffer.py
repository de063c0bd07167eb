from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    truncated: bool = False
    cause: str = ""

    def __post_init__(self):
        if self.done and not self.cause:
            raise ValueError("a terminal transition must record its cause")
        for v in (self.obs, self.action, self.next_obs):
            if not np.all(np.isfinite(v)):
                raise ValueError("transition contains non-finite values")
        if not np.isfinite(self.reward):
            raise ValueError("transition reward is not finite")


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.ptr = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, t: Transition) -> None:
        i = self.ptr
        self.obs[i], self.act[i], self.rew[i] = t.obs, t.action, t.reward
        self.next_obs[i], self.done[i] = t.next_obs, float(t.done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator):
        idx = self.sample_indices(n, rng)
        return self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.done[idx]
