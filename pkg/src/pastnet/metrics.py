"""Scoring on simulated-missing entries."""
from __future__ import annotations

import numpy as np


def rmse_mae(pred: np.ndarray, truth: np.ndarray, eval_mask: np.ndarray) -> tuple[float, float]:
    """RMSE and MAE over entries selected by the binary eval mask.

    The mask must pick only simulated-missing entries; observed entries never
    reach the score no matter what the prediction holds there.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    eval_mask = np.asarray(eval_mask, dtype=np.float64)
    if not (pred.shape == truth.shape == eval_mask.shape):
        raise ValueError("pred, truth and eval_mask must share one shape")
    if not np.all((eval_mask == 0.0) | (eval_mask == 1.0)):
        raise ValueError("eval_mask entries must be 0 or 1")
    selected = eval_mask == 1.0
    if not selected.any():
        raise ValueError("empty eval mask: nothing to score")
    err = pred[selected] - truth[selected]
    return float(np.sqrt(np.mean(err**2))), float(np.mean(np.abs(err)))
