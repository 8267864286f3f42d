"""AdaDelta updates with per-block learning rates"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

RHO = 0.95
EPSILON = 1e-6


def adadelta_step(value: np.ndarray, grad: np.ndarray, acc_grad: np.ndarray, acc_delta: np.ndarray,
                  lr: float = 1.0, rho: float = RHO, eps: float = EPSILON
                  ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    One AdaDelta update; returns (new value, new grad accumulator, new delta accumulator).

    The delta accumulator tracks the unscaled update; lr scales only the move.
    """
    acc_grad = rho * acc_grad + (1.0 - rho) * grad * grad
    delta = -np.sqrt(acc_delta + eps) / np.sqrt(acc_grad + eps) * grad
    acc_delta = rho * acc_delta + (1.0 - rho) * delta * delta
    return value + lr * delta, acc_grad, acc_delta


@dataclass
class AdaDelta:
    """Accumulators keyed by block name; each block moves at its own learning rate"""
    learning_rates: Mapping[str, float]
    rho: float = RHO
    eps: float = EPSILON
    acc_grad: Dict[str, np.ndarray] = field(default_factory=dict)
    acc_delta: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, lr in self.learning_rates.items():
            if not lr > 0:
                raise ValueError(f"learning rate of '{name}' must be > 0, got {lr}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")

    def step(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if name not in self.acc_grad:
            self.acc_grad[name] = np.zeros_like(value, dtype=float)
            self.acc_delta[name] = np.zeros_like(value, dtype=float)
        new_value, self.acc_grad[name], self.acc_delta[name] = adadelta_step(
            value, grad, self.acc_grad[name], self.acc_delta[name],
            self.learning_rates[name], self.rho, self.eps)
        return new_value

    def update(self, params, grad) -> None:
        """Move every block that has a learning rate, in place on `params`"""
        for name in self.learning_rates:
            if hasattr(params, name) and hasattr(grad, name):
                setattr(params, name, self.step(name, getattr(params, name), getattr(grad, name)))
