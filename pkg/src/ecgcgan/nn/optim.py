"""Bias-corrected Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.name = name


@dataclass
class AdamState:
    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Update ``params`` in place and advance ``state`` by one step.

    Every gradient is validated before anything is touched, so a rejected
    step leaves both the parameters and the moment estimates unchanged.
    """
    for name in params:
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradientError(name)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


class Adam:
    def __init__(self, alpha=2e-4, beta1=0.5, beta2=0.999, epsilon=1e-8):
        self.state = AdamState(alpha, beta1, beta2, epsilon)

    def step(self, params: dict[str, Tensor]) -> None:
        adam_step(
            {k: p.data for k, p in params.items()},
            {k: p.grad if p.grad is not None else np.zeros_like(p.data) for k, p in params.items()},
            self.state,
        )
