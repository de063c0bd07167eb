"""Small fully connected networks with hand-written reverse-mode gradients, and Adam."""
from __future__ import annotations

import numpy as np


class MLP:
    """tanh hidden layers, linear output. Weights are stored as (fan_in, fan_out) matrices."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, out_scale: float = 1.0):
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes!r}")
        self.sizes = [int(s) for s in sizes]
        rng = rng or np.random.default_rng(0)
        self.W, self.b = [], []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            lim = np.sqrt(6.0 / (n_in + n_out))
            if i == len(self.sizes) - 2:
                lim *= out_scale
            self.W.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
            self.b.append(np.zeros(n_out))

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.W, self.b):
            out += [W, b]
        return out

    def set_params(self, params) -> None:
        for i in range(len(self.W)):
            self.W[i][...] = params[2 * i]
            self.b[i][...] = params[2 * i + 1]

    def copy(self) -> "MLP":
        new = MLP.__new__(MLP)
        new.sizes = list(self.sizes)
        new.W = [w.copy() for w in self.W]
        new.b = [b.copy() for b in self.b]
        return new

    def forward(self, x: np.ndarray):
        """Return the output and the activations needed by ``backward``."""
        acts = [x]
        h = x
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, dy: np.ndarray):
        """Gradients of a scalar loss w.r.t. all parameters and the input, given dL/dy."""
        grads = [None] * (2 * len(self.W))
        d = dy
        for i in range(len(self.W) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.W[i].T
            if i > 0:
                d = d * (1.0 - acts[i] ** 2)
        return grads, d


class Adam:
    def __init__(self, params, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        b1, b2 = self.b1, self.b2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}


def soft_update(target: MLP, source: MLP, tau: float) -> None:
    for pt, ps in zip(target.params(), source.params()):
        pt *= 1.0 - tau
        pt += tau * ps


def gradient_check(net: MLP, x: np.ndarray, tolerance: float = 1e-4, h: float = 1e-5,
                   rng: np.random.Generator | None = None) -> float:
    """Max relative error between backprop and central differences over every weight.

    The scalar loss is a fixed random projection of the outputs. Entries whose
    gradients are both below ``tolerance * 1e-3`` in magnitude are compared in
    absolute terms, since their relative error is dominated by rounding.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    rng = rng or np.random.default_rng(1)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    c = rng.normal(size=(x.shape[0], net.sizes[-1]))

    def loss():
        return float(np.sum(net(x) * c))

    _, acts = net.forward(x)
    grads, _ = net.backward(acts, c)
    floor = tolerance * 1e-3
    worst = 0.0
    for p, g in zip(net.params(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = loss()
            flat[i] = old - h
            lm = loss()
            flat[i] = old
            num = (lp - lm) / (2 * h)
            ana = gflat[i]
            err = abs(num - ana) / max(abs(num) + abs(ana), floor)
            worst = max(worst, err)
    return worst
