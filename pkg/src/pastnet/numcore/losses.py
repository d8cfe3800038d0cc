"""Masked objectives shared by training and verification code."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, constant


class EmptyMaskError(ValueError):
    """Raised when a masked loss is asked to average over zero entries."""


def masked_mse(pred, target, mask) -> Tensor:
    """Mean squared error over entries where ``mask`` is 1.

    sum(mask * (pred - target)^2) / sum(mask).  ``mask`` must be 0/1 valued
    and is treated as a constant; ``pred`` and ``target`` may be tensors or
    arrays.  Raises EmptyMaskError when the mask selects nothing.
    """
    m = np.asarray(mask, dtype=np.float64)
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("mask entries must be 0 or 1")
    total = m.sum()
    if total == 0.0:
        raise EmptyMaskError("empty mask")
    p = pred if isinstance(pred, Tensor) else constant(pred)
    t = target if isinstance(target, Tensor) else constant(target)
    diff = p - t
    return (constant(m) * diff * diff).sum() * (1.0 / total)
