"""AdamW with decoupled weight decay, and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

from collections.abc import Container
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
               lr: float, weight_decay: float, decayed: Container[str] | None = None,
               betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """Update ``params`` in place for every name present in ``grads``.

    Weight decay is applied as ``p -= lr * wd * p`` only to names in ``decayed``
    (all names when ``decayed`` is None).
    """
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay and (decayed is None or name in decayed):
            p -= lr * weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


@dataclass
class PlateauScheduler:
    """Scale the learning rate by ``factor`` after ``patience`` epochs without a strict improvement."""

    lr: float
    patience: int = 10
    factor: float = 0.5
    min_lr: float = 1e-6
    best: float = float("inf")
    num_bad: int = 0
    reductions: int = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.num_bad = 0
        else:
            self.num_bad += 1
            if self.num_bad >= self.patience:
                new_lr = max(self.lr * self.factor, self.min_lr)
                if new_lr < self.lr:
                    self.reductions += 1
                self.lr = new_lr
                self.num_bad = 0
        return self.lr


def plateau_scheduler(state: PlateauScheduler, val_loss: float) -> float:
    return state.step(val_loss)
