"""
Layer Kernels
Forward and backward passes on channel-last (N, H, W, C) arrays.

Every forward returns (out, cache); every backward takes (dout, cache) and returns the
input gradient followed by any parameter gradients.
"""

import math
from typing import Any, Dict, Tuple

import numpy as np

from errors import NonFiniteError, ShapeMismatchError

Cache = Tuple[Any, ...]


def check_finite(name: str, array: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"non-finite values in {name}")
    return array


def same_padding(size: int, kernel: int, stride: int) -> Tuple[int, int, int]:
    """(output size, pad before, pad after) for 'same' padding: output is ceil(size / stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def _pad(x: np.ndarray, kernel: int, stride: int) -> Tuple[np.ndarray, int, int]:
    _, height, width, _ = x.shape
    out_h, top, bottom = same_padding(height, kernel, stride)
    out_w, left, right = same_padding(width, kernel, stride)
    if top or bottom or left or right:
        x = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
    return x, out_h, out_w


def _unpad(dx_pad: np.ndarray, shape: Tuple[int, ...], kernel: int, stride: int) -> np.ndarray:
    _, height, width, _ = shape
    _, top, _ = same_padding(height, kernel, stride)
    _, left, _ = same_padding(width, kernel, stride)
    return dx_pad[:, top:top + height, left:left + width, :]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> Tuple[np.ndarray, Cache]:
    """
    Cross-correlation with 'same' zero padding.
    x: (N, H, W, C), w: (k, k, C, F), b: (F,) -> (N, ceil(H/s), ceil(W/s), F)
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ShapeMismatchError("conv2d input channels must match weight channels", w.shape, x.shape)
    kernel = w.shape[0]
    x_pad, out_h, out_w = _pad(x, kernel, stride)
    out = np.zeros((x.shape[0], out_h, out_w, w.shape[3]), dtype=np.result_type(x, w))
    for i in range(kernel):
        for j in range(kernel):
            window = x_pad[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride, :]
            out += window @ w[i, j]
    out += b
    return out, (x.shape, x_pad, w, stride)


def conv2d_backward(dout: np.ndarray, cache: Cache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    shape, x_pad, w, stride = cache
    kernel = w.shape[0]
    _, out_h, out_w, _ = dout.shape
    dx_pad = np.zeros_like(x_pad)
    dw = np.zeros_like(w)
    flat_dout = dout.reshape(-1, dout.shape[3])
    for i in range(kernel):
        for j in range(kernel):
            rows = slice(i, i + stride * out_h, stride)
            cols = slice(j, j + stride * out_w, stride)
            window = x_pad[:, rows, cols, :]
            dw[i, j] = window.reshape(-1, window.shape[3]).T @ flat_dout
            dx_pad[:, rows, cols, :] += dout @ w[i, j].T
    db = dout.sum(axis=(0, 1, 2))
    return _unpad(dx_pad, shape, kernel, stride), dw, db


def depthwise_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> Tuple[np.ndarray, Cache]:
    """
    One k x k kernel per channel, no channel mixing.
    x: (N, H, W, C), w: (k, k, C), b: (C,)
    """
    if x.ndim != 4 or w.ndim != 3 or x.shape[3] != w.shape[2]:
        raise ShapeMismatchError("depthwise kernel count must match input channels", w.shape, x.shape)
    kernel = w.shape[0]
    x_pad, out_h, out_w = _pad(x, kernel, stride)
    out = np.zeros((x.shape[0], out_h, out_w, x.shape[3]), dtype=np.result_type(x, w))
    for i in range(kernel):
        for j in range(kernel):
            out += x_pad[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride, :] * w[i, j]
    out += b
    return out, (x.shape, x_pad, w, stride)


def depthwise_backward(dout: np.ndarray, cache: Cache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    shape, x_pad, w, stride = cache
    kernel = w.shape[0]
    _, out_h, out_w, _ = dout.shape
    dx_pad = np.zeros_like(x_pad)
    dw = np.zeros_like(w)
    for i in range(kernel):
        for j in range(kernel):
            rows = slice(i, i + stride * out_h, stride)
            cols = slice(j, j + stride * out_w, stride)
            dw[i, j] = (x_pad[:, rows, cols, :] * dout).sum(axis=(0, 1, 2))
            dx_pad[:, rows, cols, :] += dout * w[i, j]
    db = dout.sum(axis=(0, 1, 2))
    return _unpad(dx_pad, shape, kernel, stride), dw, db


def _reduce_axes(x: np.ndarray) -> Tuple[int, ...]:
    return tuple(range(x.ndim - 1))


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running: Dict[str, np.ndarray],
    training: bool,
    momentum: float = 0.99,
    epsilon: float = 1e-3,
) -> Tuple[np.ndarray, Cache]:
    """
    Per-channel normalization over every axis but the last. Training mode uses the
    population statistics of the batch and updates running[...] in place by
    running = momentum * running + (1 - momentum) * batch.
    """
    if x.shape[-1] != gamma.shape[0]:
        raise ShapeMismatchError("batchnorm channels", gamma.shape, x.shape)
    axes = _reduce_axes(x)
    if training:
        if x.shape[0] < 2:
            raise ValueError("batch normalization needs a batch of at least 2 in training mode")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running["mean"] *= momentum
        running["mean"] += (1.0 - momentum) * mean
        running["var"] *= momentum
        running["var"] += (1.0 - momentum) * var
    else:
        mean, var = running["mean"], running["var"]

    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x - mean) * inv_std
    out = gamma * xhat + beta
    return out, (xhat, gamma, inv_std, training)


def batchnorm_backward(dout: np.ndarray, cache: Cache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, gamma, inv_std, training = cache
    axes = _reduce_axes(dout)
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    if not training:
        return dxhat * inv_std, dgamma, dbeta
    count = dout.size // dout.shape[-1]
    dx = inv_std / count * (
        count * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
    )
    return dx, dgamma, dbeta


def relu_forward(x: np.ndarray) -> Tuple[np.ndarray, Cache]:
    return np.maximum(x, 0), (x,)


def relu_backward(dout: np.ndarray, cache: Cache) -> np.ndarray:
    (x,) = cache
    return dout * (x > 0)


def pool_window(size: int, extent: int) -> int:
    """Window along one axis: the pool size, or 1 once the extent is already 1."""
    return size if extent >= size else 1


def maxpool_forward(x: np.ndarray, size: int = 2) -> Tuple[np.ndarray, Cache]:
    """
    Non-overlapping size x size max pooling. Odd extents floor; an axis of extent
    smaller than the window passes through unpooled.
    """
    n, height, width, channels = x.shape
    ph, pw = pool_window(size, height), pool_window(size, width)
    out_h, out_w = height // ph, width // pw
    cropped = x[:, :out_h * ph, :out_w * pw, :]
    windows = (
        cropped.reshape(n, out_h, ph, out_w, pw, channels)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, out_h, out_w, channels, ph * pw)
    )
    index = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, index[..., None], axis=-1)[..., 0]
    return out, (x.shape, index, ph, pw)


def maxpool_backward(dout: np.ndarray, cache: Cache) -> np.ndarray:
    shape, index, ph, pw = cache
    n, height, width, channels = shape
    _, out_h, out_w, _ = dout.shape
    windows = np.zeros((n, out_h, out_w, channels, ph * pw), dtype=dout.dtype)
    np.put_along_axis(windows, index[..., None], dout[..., None], axis=-1)
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[:, :out_h * ph, :out_w * pw, :] = (
        windows.reshape(n, out_h, out_w, channels, ph, pw)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, out_h * ph, out_w * pw, channels)
    )
    return dx


def global_avg_pool_forward(x: np.ndarray) -> Tuple[np.ndarray, Cache]:
    return x.mean(axis=(1, 2)), (x.shape,)


def global_avg_pool_backward(dout: np.ndarray, cache: Cache) -> np.ndarray:
    (shape,) = cache
    _, height, width, _ = shape
    return np.broadcast_to(dout[:, None, None, :] / (height * width), shape).copy()


def flatten_forward(x: np.ndarray) -> Tuple[np.ndarray, Cache]:
    """Row-major ravel of everything after the batch axis."""
    return x.reshape(x.shape[0], -1), (x.shape,)


def flatten_backward(dout: np.ndarray, cache: Cache) -> np.ndarray:
    (shape,) = cache
    return dout.reshape(shape)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Cache]:
    """x: (N, D), w: (D, U), b: (U,)"""
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatchError("dense input features must match weight rows", w.shape, x.shape)
    return x @ w + b, (x, w)


def dense_backward(dout: np.ndarray, cache: Cache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
