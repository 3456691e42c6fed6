"""
Dual regression loss for valence and arousal
"""

from typing import Tuple

import numpy as np

from errors import ShapeMismatchError
from nn.functional import check_finite


def mse_dual_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean over the batch and both outputs of (pred - target)^2, and its gradient
    2 (pred - target) / (batch * 2).
    """
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ShapeMismatchError("loss expects matching (batch, 2) arrays", target.shape, pred.shape)
    check_finite("predictions", pred)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size
