"""Soft Actor-Critic and TD3 on top of the numpy networks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nets import MLP, Adam, soft_update

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_LOG_2PI = math.log(2.0 * math.pi)


class DivergenceError(RuntimeError):
    pass


@dataclass
class AgentConfig:
    hidden: int = 64
    lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    # SAC
    init_alpha: float = 0.2
    target_entropy: float | None = None
    # TD3
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    explore_noise: float = 0.1


def _check(losses: dict, nets) -> dict:
    bad = {k: v for k, v in losses.items() if not np.isfinite(v)}
    if bad or not all(np.all(np.isfinite(p)) for n in nets for p in n.params()):
        raise DivergenceError(f"divergence: non-finite losses {bad or losses}")
    return losses


class _Critics:
    def __init__(self, obs_dim, act_dim, cfg: AgentConfig, rng):
        h = cfg.hidden
        self.q = [MLP([obs_dim + act_dim, h, h, 1], rng) for _ in range(2)]
        self.q_targ = [q.copy() for q in self.q]
        self.opt = [Adam(q.params(), cfg.lr) for q in self.q]

    def update(self, o, a, y) -> float:
        x = np.concatenate([o, a], axis=1)
        total = 0.0
        for q, opt in zip(self.q, self.opt):
            pred, acts = q.forward(x)
            err = pred[:, 0] - y
            total += float(np.mean(err ** 2))
            grads, _ = q.backward(acts, (2.0 / len(y)) * err[:, None])
            opt.step(q.params(), grads)
        return total

    def target_min(self, o, a) -> np.ndarray:
        x = np.concatenate([o, a], axis=1)
        return np.minimum(self.q_targ[0](x)[:, 0], self.q_targ[1](x)[:, 0])

    def soft_update(self, tau):
        for qt, q in zip(self.q_targ, self.q):
            soft_update(qt, q, tau)


class SAC:
    name = "SAC"

    def __init__(self, obs_dim: int, act_dim: int, cfg: AgentConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg or AgentConfig()
        self.rng = rng or np.random.default_rng(0)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        h = self.cfg.hidden
        self.actor = MLP([obs_dim, h, h, 2 * act_dim], self.rng, out_scale=0.1)
        self.actor_opt = Adam(self.actor.params(), self.cfg.lr)
        self.critics = _Critics(obs_dim, act_dim, self.cfg, self.rng)
        self.log_alpha = np.array([math.log(self.cfg.init_alpha)])
        self.alpha_opt = Adam([self.log_alpha], self.cfg.lr)
        self.target_entropy = -float(act_dim) if self.cfg.target_entropy is None else self.cfg.target_entropy
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def _dist(self, o):
        out, acts = self.actor.forward(o)
        mu, ls_raw = out[:, : self.act_dim], out[:, self.act_dim:]
        ls = np.clip(ls_raw, LOG_STD_MIN, LOG_STD_MAX)
        return mu, ls, ls_raw, acts

    def _sample(self, o):
        mu, ls, ls_raw, acts = self._dist(o)
        eps = self.rng.normal(size=mu.shape)
        std = np.exp(ls)
        u = mu + std * eps
        a = np.tanh(u)
        logp = np.sum(-0.5 * eps ** 2 - ls - 0.5 * _LOG_2PI - np.log(1.0 - a ** 2 + 1e-6), axis=1)
        return a, logp, (mu, ls, ls_raw, acts, eps, std)

    def act(self, obs: np.ndarray, deterministic: bool = False) -> np.ndarray:
        o = np.atleast_2d(obs)
        if deterministic:
            mu, _, _, _ = self._dist(o)
            return np.tanh(mu)[0]
        return self._sample(o)[0][0]

    def update(self, batch) -> dict:
        o, a, r, o2, d = batch
        cfg = self.cfg
        a2, logp2, _ = self._sample(o2)
        y = r + cfg.gamma * (1.0 - d) * (self.critics.target_min(o2, a2) - self.alpha * logp2)
        q_loss = self.critics.update(o, a, y)

        # Actor: minimise alpha * logp - min_i Q_i(o, a~pi).
        a_pi, logp, (mu, ls, ls_raw, acts, eps, std) = self._sample(o)
        x = np.concatenate([o, a_pi], axis=1)
        qs, caches = [], []
        for q in self.critics.q:
            v, c = q.forward(x)
            qs.append(v[:, 0])
            caches.append(c)
        pick = (qs[1] < qs[0]).astype(float)[:, None]
        n = len(r)
        dq_da = np.zeros_like(a_pi)
        for k, (q, c) in enumerate(zip(self.critics.q, caches)):
            w = pick if k == 1 else 1.0 - pick
            _, dx = q.backward(c, w / n)
            dq_da += dx[:, self.obs_dim:]
        q_min = np.minimum(qs[0], qs[1])
        alpha = self.alpha
        one_m = 1.0 - a_pi ** 2
        g = 2.0 * a_pi * one_m / (one_m + 1e-6)
        d_u = alpha * g / n - dq_da * one_m
        d_ls = -alpha / n + d_u * std * eps
        d_ls = d_ls * ((ls_raw > LOG_STD_MIN) & (ls_raw < LOG_STD_MAX))
        grads, _ = self.actor.backward(acts, np.concatenate([d_u, d_ls], axis=1))
        self.actor_opt.step(self.actor.params(), grads)
        pi_loss = float(np.mean(alpha * logp - q_min))

        alpha_grad = -float(np.mean(logp + self.target_entropy))
        self.alpha_opt.step([self.log_alpha], [np.array([alpha_grad])])
        self.critics.soft_update(cfg.tau)
        self.updates += 1
        return _check({"q_loss": q_loss, "pi_loss": pi_loss, "alpha": self.alpha},
                      [self.actor] + self.critics.q)

    def networks(self) -> dict:
        c = self.critics
        return {"actor": self.actor, "q1": c.q[0], "q2": c.q[1], "q1_targ": c.q_targ[0], "q2_targ": c.q_targ[1]}

    def extra_state(self) -> dict:
        return {"log_alpha": float(self.log_alpha[0])}

    def load_extra_state(self, s: dict) -> None:
        self.log_alpha[0] = s.get("log_alpha", self.log_alpha[0])


class TD3:
    name = "TD3"

    def __init__(self, obs_dim: int, act_dim: int, cfg: AgentConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg or AgentConfig()
        self.rng = rng or np.random.default_rng(0)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        h = self.cfg.hidden
        self.actor = MLP([obs_dim, h, h, act_dim], self.rng, out_scale=0.1)
        self.actor_targ = self.actor.copy()
        self.actor_opt = Adam(self.actor.params(), self.cfg.lr)
        self.critics = _Critics(obs_dim, act_dim, self.cfg, self.rng)
        self.updates = 0

    def act(self, obs: np.ndarray, deterministic: bool = False) -> np.ndarray:
        a = np.tanh(self.actor(np.atleast_2d(obs)))[0]
        if not deterministic:
            a = np.clip(a + self.cfg.explore_noise * self.rng.normal(size=a.shape), -1.0, 1.0)
        return a

    def update(self, batch) -> dict:
        o, a, r, o2, d = batch
        cfg = self.cfg
        noise = np.clip(cfg.target_noise * self.rng.normal(size=a.shape), -cfg.noise_clip, cfg.noise_clip)
        a2 = np.clip(np.tanh(self.actor_targ(o2)) + noise, -1.0, 1.0)
        y = r + cfg.gamma * (1.0 - d) * self.critics.target_min(o2, a2)
        q_loss = self.critics.update(o, a, y)
        self.updates += 1
        pi_loss = float("nan")
        losses = {"q_loss": q_loss}
        if self.updates % cfg.policy_delay == 0:
            out, acts = self.actor.forward(o)
            a_pi = np.tanh(out)
            q1 = self.critics.q[0]
            v, c = q1.forward(np.concatenate([o, a_pi], axis=1))
            _, dx = q1.backward(c, np.full((len(r), 1), 1.0 / len(r)))
            d_out = -dx[:, self.obs_dim:] * (1.0 - a_pi ** 2)
            grads, _ = self.actor.backward(acts, d_out)
            self.actor_opt.step(self.actor.params(), grads)
            pi_loss = -float(np.mean(v))
            losses["pi_loss"] = pi_loss
            soft_update(self.actor_targ, self.actor, cfg.tau)
            self.critics.soft_update(cfg.tau)
        return _check(losses, [self.actor] + self.critics.q)

    def networks(self) -> dict:
        c = self.critics
        return {"actor": self.actor, "actor_targ": self.actor_targ, "q1": c.q[0], "q2": c.q[1],
                "q1_targ": c.q_targ[0], "q2_targ": c.q_targ[1]}

    def extra_state(self) -> dict:
        return {}

    def load_extra_state(self, s: dict) -> None:
        pass


ALGORITHMS = {"SAC": SAC, "TD3": TD3}


def make_agent(algorithm: str, obs_dim: int, act_dim: int, cfg: AgentConfig | None = None,
               rng: np.random.Generator | None = None):
    key = algorithm.upper()
    if key not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {sorted(ALGORITHMS)}")
    return ALGORITHMS[key](obs_dim, act_dim, cfg, rng)
