"""Adam with bias correction, applied over a ParamStore in path order.

Moment buffers live in the state object keyed by parameter path.  A step
consumes whatever is in each parameter's gradient accumulator and then
clears it, so the calling loop is always accumulate -> step.  A parameter
whose accumulated gradient is exactly zero comes out of the step bitwise
unchanged (the update term is exactly 0.0), which is what lets loss-weight
ablations prove that no gradient leaks across the two submodels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamStore


class NonFiniteGradientError(FloatingPointError):
    """A gradient accumulator contains NaN or +-inf."""


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParamStore, lr: float = 1e-4, **kwargs) -> "AdamState":
        state = cls(lr=lr, **kwargs)
        for path, t in params.items():
            state.first_moment[path] = np.zeros_like(t.data)
            state.second_moment[path] = np.zeros_like(t.data)
        return state


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One update over every parameter; raises on non-finite gradients."""
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for path, p in params.items():
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter {path}")
        m = state.first_moment[path]
        v = state.second_moment[path]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        p.grad[...] = 0.0
