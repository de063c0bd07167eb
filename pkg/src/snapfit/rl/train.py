"""Training loop, periodic evaluation and evaluation grids."""
from __future__ import annotations

import copy
import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import world as W
from .agents import AgentConfig, DivergenceError, make_agent
from .buffer import ReplayBuffer, Transition
from .checkpoint import save_checkpoint
from .env import ACT_DIM, OBS_DIM, SnapFitEnv, normalize

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("step", "avg_return", "success_rate", "mean_skills")


@dataclass
class TrainConfig:
    total_skills: int = 100_000
    eval_period: int = 1_000
    eval_rollouts: int = 100
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    n_skills: int = 6
    algorithm: str = "SAC"
    gamma: float = 0.99
    lr: float = 3e-4
    tau: float = 0.005
    buffer_size: int = 100_000
    batch_size: int = 256
    learning_starts: int = 1_000
    updates_per_skill: int = 2
    hidden: int = 64

    def __post_init__(self):
        if self.total_skills < 0:
            raise ValueError("total_skills must be >= 0")
        for name in ("eval_period", "eval_rollouts", "n_skills", "buffer_size", "batch_size", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"train.{name} must be positive")
        if self.total_skills and self.eval_period > self.total_skills:
            raise ValueError("eval_period must not exceed total_skills")
        if not (0 < self.gamma <= 1 and self.lr >= 0 and 0 < self.tau <= 1):
            raise ValueError("invalid discount, learning rate or tau")

    def agent_config(self) -> AgentConfig:
        return AgentConfig(hidden=self.hidden, lr=self.lr, gamma=self.gamma, tau=self.tau,
                           batch_size=self.batch_size)


@dataclass
class TrainResult:
    agent: object
    curve: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    wall_time: float = 0.0


class _Policy:
    def __init__(self, agent, deterministic=True):
        self.agent, self.deterministic = agent, deterministic

    def __call__(self, obs):
        return self.agent.act(normalize(obs), self.deterministic)


def _rollout(agent, world_cfg, rand, n_skills, seed):
    env = SnapFitEnv(world_cfg, rand, n_skills, seed=seed)
    obs = env.reset()
    ret, done, info = 0.0, False, {}
    while not done:
        obs, r, done, info = env.step(agent.act(normalize(obs), True))
        ret += r
    return ret, bool(info["success"]), info["skills_used"]


def _rollout_chunk(args):
    agent, world_cfg, rand, n_skills, seeds = args
    return [_rollout(agent, world_cfg, rand, n_skills, s) for s in seeds]


def run_rollouts(agent, world_cfg, rand, n_skills, seeds, workers: int = 1) -> list:
    """Deterministic policy rollouts, one per seed; identical results for any worker count."""
    seeds = list(seeds)
    if workers <= 1 or len(seeds) < 2:
        return _rollout_chunk((agent, world_cfg, rand, n_skills, seeds))
    chunks = [seeds[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(workers) as ex:
        parts = list(ex.map(_rollout_chunk, [(agent, world_cfg, rand, n_skills, c) for c in chunks]))
    out = [None] * len(seeds)
    for i, part in enumerate(parts):
        for j, res in enumerate(part):
            out[i + j * workers] = res
    return out


def evaluate(agent, world_cfg, rand, rollouts: int = 100, n_skills: int = 6, seed: int = 10_000,
             workers: int = 1) -> dict:
    res = run_rollouts(agent, world_cfg, rand, n_skills, range(seed, seed + rollouts), workers)
    rets = [r[0] for r in res]
    succ = [r for r in res if r[1]]
    return {
        "avg_return": float(np.mean(rets)),
        "success_rate": len(succ) / len(res),
        "mean_skills": float(np.mean([r[2] for r in res])),
        "mean_skills_success": float(np.mean([r[2] for r in succ])) if succ else float("nan"),
    }


def train(cfg: TrainConfig, world_cfg: W.WorldConfig | None = None, rand: W.RandomizationConfig | None = None,
          seed: int = 0, out_dir=None, workers: int = 1, eval_rand: W.RandomizationConfig | None = None,
          progress=None) -> TrainResult:
    world_cfg = world_cfg or W.WorldConfig()
    rand = rand or W.RandomizationConfig()
    eval_rand = eval_rand or rand
    rng = np.random.default_rng(seed)
    agent = make_agent(cfg.algorithm, OBS_DIM, ACT_DIM, cfg.agent_config(), np.random.default_rng(seed + 1))
    env = SnapFitEnv(world_cfg, rand, cfg.n_skills, seed=seed + 2)
    buf = ReplayBuffer(cfg.buffer_size, OBS_DIM, ACT_DIM)
    result = TrainResult(agent)
    out_dir = Path(out_dir) if out_dir is not None else None
    t0 = time.perf_counter()

    def checkpoint(tag, step, who=None):
        if out_dir is None:
            return
        p = save_checkpoint(out_dir / f"{cfg.algorithm.lower()}_seed{seed}_{tag}.sfs", who or agent,
                            {"seed": seed, "step": step})
        result.checkpoints.append(p)

    checkpoint("init", 0)
    healthy, healthy_step = copy.deepcopy(agent), 0
    obs = normalize(env.reset())
    for step in range(1, cfg.total_skills + 1):
        if step <= cfg.learning_starts:
            a = rng.uniform(-1.0, 1.0, ACT_DIM)
        else:
            a = agent.act(obs, deterministic=False)
        raw_next, r, done, info = env.step(a)
        nxt = normalize(raw_next)
        buf.add(Transition(obs, a, r, nxt, info["terminal"], info["truncated"], info["cause"]))
        obs = normalize(env.reset()) if done else nxt
        if step > cfg.learning_starts and len(buf) >= cfg.batch_size:
            try:
                for _ in range(cfg.updates_per_skill):
                    agent.update(buf.sample(cfg.batch_size, rng))
            except DivergenceError:
                log.error("training diverged at skill %d; keeping the state from skill %d", step, healthy_step)
                checkpoint("healthy", healthy_step, healthy)
                raise
        if step % cfg.eval_period == 0:
            ev = evaluate(agent, world_cfg, eval_rand, cfg.eval_rollouts, cfg.n_skills, workers=workers)
            row = {"step": step, "avg_return": ev["avg_return"], "success_rate": ev["success_rate"],
                   "mean_skills": ev["mean_skills"]}
            result.curve.append(row)
            healthy, healthy_step = copy.deepcopy(agent), step
            log.info("skills=%d return=%.3f success=%.2f mean_skills=%.2f (%.0fs)", step, ev["avg_return"],
                     ev["success_rate"], ev["mean_skills"], time.perf_counter() - t0)
            if progress is not None:
                progress(row)
    if cfg.total_skills:
        checkpoint("final", cfg.total_skills)
    result.wall_time = time.perf_counter() - t0
    return result


def write_curve(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
        w.writeheader()
        for row in curve:
            w.writerow({k: row[k] for k in CURVE_COLUMNS})


@dataclass
class GridSpec:
    yaws_deg: tuple = tuple(range(-8, 9, 2))
    positions_mm: tuple = (-60, -30, 0, 30, 60)
    rollouts: int = 10
    dx_range_mm: float = 5.0
    seed: int = 20_000


def core_mask(yaws_deg, limit: float = 2.0) -> np.ndarray:
    return np.abs(np.asarray(yaws_deg, dtype=float)) <= limit + 1e-9


def evaluate_grid(agent, grid: GridSpec | None = None, world_cfg: W.WorldConfig | None = None,
                  n_skills: int = 6, workers: int = 1) -> np.ndarray:
    """Success fraction per (mount position, rail yaw) cell; rows follow ``positions_mm``."""
    grid = grid or GridSpec()
    world_cfg = world_cfg or W.WorldConfig()
    table = np.zeros((len(grid.positions_mm), len(grid.yaws_deg)))
    for i, pos in enumerate(grid.positions_mm):
        for j, yaw in enumerate(grid.yaws_deg):
            rand = W.RandomizationConfig(dx_range=grid.dx_range_mm * W.MM, gamma_range=0.0, force_noise=0.2,
                                         y_rail=pos * W.MM, gamma_center=yaw * W.DEG)
            base = grid.seed + 1000 * i + 100 * j
            res = run_rollouts(agent, world_cfg, rand, n_skills, range(base, base + grid.rollouts), workers)
            table[i, j] = sum(r[1] for r in res) / grid.rollouts
    return table


def write_grid_csv(path, table, grid: GridSpec) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position_mm"] + [f"yaw_{y:g}deg" for y in grid.yaws_deg])
        for pos, row in zip(grid.positions_mm, table):
            w.writerow([pos] + [f"{v:.4f}" for v in row])


def write_pgm(path, table, cell: int = 16) -> None:
    """Plain (P2) grayscale heatmap, white = 100 % success."""
    rows, cols = table.shape
    h, w = rows * cell, cols * cell
    lines = ["P2", f"{w} {h}", "255"]
    for r in range(rows):
        line = " ".join(str(int(round(255 * float(np.clip(table[r, c], 0, 1))))) for c in range(cols)
                        for _ in range(cell))
        lines += [line] * cell
    Path(path).write_text("\n".join(lines) + "\n")


def core_success(table, grid: GridSpec) -> float:
    return float(table[:, core_mask(grid.yaws_deg)].mean())


def success_at(table, grid: GridSpec, yaw_abs: float) -> float:
    m = np.isclose(np.abs(np.asarray(grid.yaws_deg, dtype=float)), yaw_abs)
    return float(table[:, m].mean()) if m.any() else math.nan
