"""AdamW with decoupled weight decay and the cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .params import ParameterStore


def cosine_lr(t: int, total_steps: int, base_lr: float) -> float:
    """base_lr * (1 + cos(pi * t / T)) / 2 for t in [0, T]."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= t <= total_steps:
        raise ValueError(f"step {t} outside [0, {total_steps}]")
    return base_lr * (1.0 + math.cos(math.pi * t / total_steps)) / 2.0


class AdamW:
    """Decoupled weight decay (applied before the adaptive step) plus
    bias-corrected Adam moments. Deterministic: identical inputs give
    bit-identical parameters."""

    def __init__(self, params: ParameterStore, lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None):
        """One update over the provided gradients; parameters without a
        gradient entry are left untouched."""
        lr = self.lr if lr is None else lr
        self.t += 1
        t = self.t
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, g in grads.items():
            p = self.params[name]
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape mismatch for {name!r}: "
                                 f"{g.shape} vs {p.data.shape}")
            if name not in self._m:
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            if self.weight_decay:
                p.data = p.data - lr * self.weight_decay * p.data
            m = self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * (g * g)
            mhat = m / bc1
            vhat = v / bc2
            p.data = p.data - lr * mhat / (np.sqrt(vhat) + self.eps)
