"""Adam on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step_count: int = 0

    def reset(self) -> None:
        self.m = None
        self.v = None
        self.step_count = 0

    def step(self, params: np.ndarray, grad: np.ndarray, maximize: bool = False) -> np.ndarray:
        """Return updated parameters; ``maximize`` ascends the gradient."""
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        g = -grad if maximize else grad
        self.step_count += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1 ** self.step_count)
        vhat = self.v / (1 - self.beta2 ** self.step_count)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class BaselineState:
    """Exponentially smoothed control variate for score-function gradients."""

    decay: float = 0.7
    ema: float = 0.0
    initialized: bool = False

    @property
    def value(self) -> float:
        return self.ema if self.initialized else 0.0

    def update(self, batch_mean: float) -> None:
        if not self.initialized:
            self.ema = float(batch_mean)
            self.initialized = True
        else:
            self.ema = self.decay * self.ema + (1 - self.decay) * float(batch_mean)
