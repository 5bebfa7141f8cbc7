"""Adam with decoupled weight decay, and the one-cycle cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OneCycle:
    """Cosine warm-up from ``max_lr/div`` to ``max_lr``, then cosine decay to ``max_lr/final_div``.

    The peak sits at step ``round(pct_start * (total_steps - 1))``.
    """

    max_lr: float
    total_steps: int
    pct_start: float = 0.3
    div: float = 25.0
    final_div: float = 1e4

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")

    @property
    def peak_step(self) -> int:
        return int(round(self.pct_start * (self.total_steps - 1)))

    def __call__(self, step: int) -> float:
        start = self.max_lr / self.div
        end = self.max_lr / self.final_div
        last = self.total_steps - 1
        step = min(max(step, 0), max(last, 0))
        peak = self.peak_step
        if step <= peak:
            if peak == 0:
                return self.max_lr
            return _cos_interp(start, self.max_lr, step / peak)
        return _cos_interp(self.max_lr, end, (step - peak) / (last - peak))


def _cos_interp(a: float, b: float, frac: float) -> float:
    return b + (a - b) * 0.5 * (1.0 + math.cos(math.pi * frac))


class AdamW:
    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-4,
                 decay_filter=lambda name: name.endswith(".W")):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.decay_filter = decay_filter
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float):
        """Update ``params`` in place."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            if self.weight_decay and self.decay_filter(k):
                p -= (lr * self.weight_decay) * p
            p -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        out = {"t": np.array(self.t)}
        for k in self.m:
            out[f"m/{k}"] = self.m[k]
            out[f"v/{k}"] = self.v[k]
        return out

    def load_state(self, state: dict):
        self.t = int(state["t"])
        for k in self.m:
            self.m[k][...] = state[f"m/{k}"]
            self.v[k][...] = state[f"v/{k}"]
