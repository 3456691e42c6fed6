"""
Finite-difference gradient checks
Central differences against the analytic backward pass, for single layers and whole networks
"""

from typing import Callable, Dict, Optional

import numpy as np

from nn.layers import Layer
from nn.loss import mse_dual_loss

DEFAULT_STEP = 1e-5


def relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8, relative_floor: float = 1e-2
) -> float:
    """
    Worst per-element |a - n| / max(|a|, |n|, relative_floor * tensor scale, floor), where the
    tensor scale is the largest magnitude in either gradient.
    Entries far below the scale are compared against that floor.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    magnitude = np.maximum(np.abs(analytic), np.abs(numeric))
    denominator = np.maximum(magnitude, max(relative_floor * float(magnitude.max()), floor))
    return float(np.max(np.abs(analytic - numeric) / denominator))


def numeric_gradient(
    f: Callable[[], float],
    array: np.ndarray,
    h: float = DEFAULT_STEP,
    indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    d f / d array by central differences, perturbing array in place and restoring it.
    When indices (flat) is given only those entries are perturbed; the rest stay zero.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in (range(flat.size) if indices is None else indices):
        original = flat[i]
        flat[i] = original + h
        plus = f()
        flat[i] = original - h
        minus = f()
        flat[i] = original
        flat_grad[i] = (plus - minus) / (2.0 * h)
    return grad


def _sample_indices(size: int, limit: Optional[int], rng: np.random.Generator) -> Optional[np.ndarray]:
    if limit is None or size <= limit:
        return None
    return np.sort(rng.choice(size, size=limit, replace=False))


def _masked(analytic: np.ndarray, indices: Optional[np.ndarray]) -> np.ndarray:
    if indices is None:
        return analytic
    out = np.zeros_like(analytic, dtype=np.float64)
    out.reshape(-1)[indices] = analytic.reshape(-1)[indices]
    return out


def check_layer(
    layer: Layer,
    x: np.ndarray,
    training: bool = True,
    seed: int = 0,
    h: float = DEFAULT_STEP,
    max_entries: Optional[int] = None,
) -> Dict[str, float]:
    """
    Relative errors of the input gradient and every parameter gradient of one built layer,
    for the scalar objective sum(forward(x) * r) with a fixed random r.
    """
    rng = np.random.default_rng(seed)
    out = layer.forward(x, training)
    projection = rng.normal(size=out.shape)

    def objective() -> float:
        return float(np.sum(layer.forward(x, training) * projection))

    layer.forward(x, training)
    dx = layer.backward(projection.astype(out.dtype))
    analytic = {name: grad.copy() for name, grad in layer.grads.items()}

    errors = {}
    picked = _sample_indices(x.size, max_entries, rng)
    errors["input"] = relative_error(_masked(dx, picked), numeric_gradient(objective, x, h, picked))
    for name, param in layer.params.items():
        picked = _sample_indices(param.size, max_entries, rng)
        errors[name] = relative_error(_masked(analytic[name], picked), numeric_gradient(objective, param, h, picked))
    return errors


def check_network(
    network,
    x: np.ndarray,
    target: np.ndarray,
    training: bool = True,
    seed: int = 0,
    h: float = DEFAULT_STEP,
    max_entries: Optional[int] = 20,
) -> Dict[str, float]:
    """
    Relative errors for the MSE dual loss of a whole network: the input and a random
    subset of entries in every parameter tensor.
    """
    rng = np.random.default_rng(seed)

    def objective() -> float:
        return mse_dual_loss(network.forward(x, training), target)[0]

    _, dpred = mse_dual_loss(network.forward(x, training), target)
    dx = network.backward(dpred)
    analytic = {name: grad.copy() for name, grad in network.gradients().items()}

    errors = {}
    picked = _sample_indices(x.size, max_entries, rng)
    errors["input"] = relative_error(_masked(dx, picked), numeric_gradient(objective, x, h, picked))
    for name, param in network.parameters().items():
        picked = _sample_indices(param.size, max_entries, rng)
        errors[name] = relative_error(_masked(analytic[name], picked), numeric_gradient(objective, param, h, picked))
    return errors
