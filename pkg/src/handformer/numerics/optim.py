"""SGD with momentum and stepwise learning-rate decay."""
from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .tensor import Parameter


class SgdMomentum:
    """Momentum SGD: v <- momentum*v + grad; value <- value - lr*v.

    The learning rate drops by ``decay_factor`` the first time ``step`` is
    called with an epoch listed in ``decay_epochs`` (applied before the
    parameter update of that step).
    """

    def __init__(self, params: Iterable[Parameter], lr: float = 0.025, momentum: float = 0.9,
                 decay_epochs: Iterable[int] = (25, 40), decay_factor: float = 0.1):
        self.params = [p for p in params if p.trainable]
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if decay_factor <= 0:
            raise ValueError("decay factor must be positive")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.decay_epochs = frozenset(int(e) for e in decay_epochs)
        self.decay_factor = float(decay_factor)
        self.velocity = [np.zeros_like(p.data) for p in self.params]
        self.applied_decays: set[int] = set()

    def step(self, epoch: Optional[int] = None) -> None:
        if epoch is not None and epoch in self.decay_epochs and epoch not in self.applied_decays:
            self.lr *= self.decay_factor
            self.applied_decays.add(epoch)
        for p, v in zip(self.params, self.velocity):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            v *= self.momentum
            v += g
            p.data -= self.lr * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
