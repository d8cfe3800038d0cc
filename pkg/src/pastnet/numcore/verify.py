"""Finite-difference validation of the analytic gradients.

grad_check re-evaluates a scalar objective under coordinate perturbations
and compares central differences against the tape's gradients.  The
objective must be a pure function of the parameter values; this is enforced
by evaluating it twice up front and demanding bitwise equality, which
catches unseeded randomness before it can masquerade as gradient error.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import Tensor


class NonDeterministicObjectiveError(RuntimeError):
    """Two evaluations of the objective at the same point disagreed."""


def grad_check(
    loss_fn: Callable[[ParamStore], Tensor],
    params: ParamStore,
    probe_eps: float = 1e-5,
    n_samples: int = 32,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and numeric partial derivatives.

    Error per coordinate is |analytic - numeric| / max(1, |numeric|).  At
    least ``n_samples`` coordinates are probed, sampled uniformly across all
    parameters (every coordinate when the model is smaller than that).
    """
    value_a = float(loss_fn(params).data)
    value_b = float(loss_fn(params).data)
    if value_a != value_b:
        raise NonDeterministicObjectiveError(
            f"non-deterministic objective: {value_a!r} != {value_b!r}"
        )

    params.zero_grads()
    loss = loss_fn(params)
    loss.backward()
    analytic = {path: t.grad.copy() for path, t in params.items()}
    params.zero_grads()

    coords: list[tuple[str, int]] = []
    for path, t in params.items():
        coords.extend((path, i) for i in range(t.data.size))
    rng = np.random.default_rng(seed)
    if len(coords) > n_samples:
        picked = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[i] for i in sorted(picked)]

    worst = 0.0
    for path, flat_index in coords:
        buf = params[path].data
        original = buf.flat[flat_index]
        buf.flat[flat_index] = original + probe_eps
        f_plus = float(loss_fn(params).data)
        buf.flat[flat_index] = original - probe_eps
        f_minus = float(loss_fn(params).data)
        buf.flat[flat_index] = original
        numeric = (f_plus - f_minus) / (2.0 * probe_eps)
        err = abs(analytic[path].flat[flat_index] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
