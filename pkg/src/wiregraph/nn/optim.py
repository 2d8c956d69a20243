"""Adam with decoupled weight decay and a cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptState", "adam_step", "cosine_lr"]

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def cosine_lr(step: int, total_steps: int, base_lr: float, alpha: float = 0.01) -> float:
    """``base_lr * (alpha + (1 - alpha) * (1 + cos(pi * t / T)) / 2)``, ``t`` clamped to ``[0, T]``."""
    if total_steps <= 0:
        return base_lr
    t = min(max(step, 0), total_steps)
    return base_lr * (alpha + (1.0 - alpha) * 0.5 * (1.0 + math.cos(math.pi * t / total_steps)))


@dataclass
class OptState:
    total_steps: int
    base_lr: float = 2e-4
    weight_decay: float = 1e-4
    alpha: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr(self) -> float:
        return cosine_lr(self.step, self.total_steps, self.base_lr, self.alpha)


def adam_step(params: dict, grads: dict, opt: OptState) -> float:
    """One in-place AdamW update; returns the learning rate used.

    ``params`` maps names to arrays or objects with a ``.value`` array.
    Weight decay is decoupled: ``w <- w - lr * wd * w`` alongside the Adam step.
    """
    lr = opt.lr()
    opt.step += 1
    t = opt.step
    bc1 = 1.0 - BETA1 ** t
    bc2 = 1.0 - BETA2 ** t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        w = p.value if hasattr(p, "value") else p
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {w.shape} for {name}")
        m = opt.m.get(name)
        if m is None:
            m = opt.m[name] = np.zeros_like(w)
            opt.v[name] = np.zeros_like(w)
        v = opt.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        update = lr * ((m / bc1) / (np.sqrt(v / bc2) + EPS) + opt.weight_decay * w)
        w -= update
    return lr
