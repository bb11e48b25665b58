"""Adadelta and RMSprop on flat parameter buffers."""
from __future__ import annotations

import numpy as np

from .nn import Network


class NonFiniteGradientError(FloatingPointError):
    pass


class Optimizer:
    kind = ""

    def __init__(self, size: int, rho: float, epsilon: float, learning_rate: float):
        self.rho = rho
        self.epsilon = epsilon
        self.learning_rate = learning_rate
        self.sq_grad = np.zeros(size)
        self.sq_update = np.zeros(size)

    def step(self, net: Network, grad: np.ndarray) -> np.ndarray:
        """Update ``net.flat`` in place; returns the applied update."""
        if grad.shape != net.flat.shape or self.sq_grad.shape != net.flat.shape:
            raise ValueError("gradient/state shape does not match the network")
        bad = np.flatnonzero(~np.isfinite(grad))
        if bad.size:
            raise NonFiniteGradientError(f"non-finite gradient in {net.block_name(int(bad[0]))}")
        update = self._update(grad)
        net.flat += update
        net.touch()
        return update

    def _update(self, grad):
        raise NotImplementedError

    def state_dict(self) -> dict:
        return {"kind": self.kind, "rho": self.rho, "epsilon": self.epsilon,
                "learning_rate": self.learning_rate}


class Adadelta(Optimizer):
    """Zeiler's Adadelta; ``learning_rate`` scales the unit-correct step (1.0 = original)."""
    kind = "adadelta"

    def __init__(self, size: int, rho: float = 0.95, epsilon: float = 1e-6, learning_rate: float = 1.0):
        super().__init__(size, rho, epsilon, learning_rate)

    def _update(self, g):
        rho, eps = self.rho, self.epsilon
        self.sq_grad *= rho
        self.sq_grad += (1.0 - rho) * g * g
        update = -self.learning_rate * np.sqrt(self.sq_update + eps) / np.sqrt(self.sq_grad + eps) * g
        self.sq_update *= rho
        self.sq_update += (1.0 - rho) * update * update
        return update


class RMSprop(Optimizer):
    kind = "rmsprop"

    def __init__(self, size: int, rho: float = 0.9, epsilon: float = 1e-7, learning_rate: float = 1e-3):
        super().__init__(size, rho, epsilon, learning_rate)

    def _update(self, g):
        self.sq_grad *= self.rho
        self.sq_grad += (1.0 - self.rho) * g * g
        return -self.learning_rate * g / np.sqrt(self.sq_grad + self.epsilon)


def make_optimizer(kind: str, size: int, **hyper) -> Optimizer:
    hyper = {k: v for k, v in hyper.items() if v is not None}
    if kind == "adadelta":
        return Adadelta(size, **hyper)
    if kind == "rmsprop":
        return RMSprop(size, **hyper)
    raise ValueError(f"unknown optimizer {kind!r}")
