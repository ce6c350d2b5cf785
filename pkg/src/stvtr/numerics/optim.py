"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .tensor import ParameterSet


class AdamW:
    def __init__(
        self,
        params: ParameterSet,
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self._v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self) -> None:
        self.t += 1
        for name, p in self.params.items():
            kernels.adamw_step(
                p.data,
                p.grad,
                self._m[name],
                self._v[name],
                self.t,
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                self.weight_decay,
            )


def clip_grad_norm(params: ParameterSet, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    for _, p in params.items():
        total += float((p.grad * p.grad).sum())
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for _, p in params.items():
            p.grad *= scale
    return norm
