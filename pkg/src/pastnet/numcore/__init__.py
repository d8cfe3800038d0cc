"""Numeric foundation: tape-based autodiff, parameters, Adam, grad check."""
from .losses import EmptyMaskError, masked_mse
from .optim import AdamState, NonFiniteGradientError, adam_step
from .params import ParamStore
from .tensor import (
    Tensor,
    concat,
    constant,
    embedding,
    matmul,
    relu,
    sigmoid,
    softplus,
    tanh,
)
from .verify import NonDeterministicObjectiveError, grad_check

__all__ = [
    "AdamState",
    "EmptyMaskError",
    "NonDeterministicObjectiveError",
    "NonFiniteGradientError",
    "ParamStore",
    "Tensor",
    "adam_step",
    "concat",
    "constant",
    "embedding",
    "grad_check",
    "masked_mse",
    "matmul",
    "relu",
    "sigmoid",
    "softplus",
    "tanh",
]
