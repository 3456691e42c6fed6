"""
Layers
Stateful wrappers around the kernels: parameters, gradients, buffers and the forward cache
"""

from abc import ABC, abstractmethod
from typing import Callable, Dict, Optional, Tuple, Type

import numpy as np

from errors import LayerStateError, ShapeMismatchError
from nn import functional as F
from schemas.layers import (
    BatchNormSpec, Conv2DSpec, DenseSpec, DepthwiseConv2DSpec, FlattenSpec, GlobalAvgPoolSpec,
    LayerSpec, MaxPoolSpec, OutputHeadSpec, PointwiseConvSpec, ReLUSpec,
)

Shape = Tuple[int, ...]


class Layer(ABC):
    """
    Abstract base class for every network layer.
    Shapes exclude the batch axis.
    """

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self.input_shape: Optional[Shape] = None
        self._cache = None

    @property
    def kind(self) -> str:
        return self.spec.kind

    @abstractmethod
    def output_shape(self, input_shape: Shape) -> Shape:
        """Output shape for a given input shape"""
        pass

    def param_shapes(self, input_shape: Shape) -> Dict[str, Shape]:
        """Learnable parameter shapes, without allocating them"""
        return {}

    def build(self, input_shape: Shape, rng: Optional[np.random.Generator], dtype: str) -> Shape:
        """Allocate parameters for input_shape; rng None leaves weights at zero."""
        self.input_shape = tuple(input_shape)
        for name, shape in self.param_shapes(self.input_shape).items():
            self.params[name] = np.zeros(shape, dtype=dtype)
            self.grads[name] = np.zeros(shape, dtype=dtype)
        if rng is not None:
            self.initialize(rng)
        return self.output_shape(self.input_shape)

    def initialize(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if self.input_shape is not None and tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatchError(f"{self.kind} input", self.input_shape, tuple(x.shape[1:]))
        out, self._cache = self._forward(x, training)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        """Accumulate-free: parameter gradients are overwritten on every call."""
        if self._cache is None:
            raise LayerStateError(f"{self.kind}: backward called before forward")
        dx, param_grads = self._backward(dout, self._cache)
        for name, grad in param_grads.items():
            self.grads[name] = grad
        return dx

    def clear_cache(self) -> None:
        self._cache = None

    @abstractmethod
    def _forward(self, x: np.ndarray, training: bool):
        pass

    @abstractmethod
    def _backward(self, dout: np.ndarray, cache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        pass

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))


class Conv2D(Layer):
    def output_shape(self, input_shape: Shape) -> Shape:
        h, w, _ = input_shape
        s = self.spec.stride
        return (-(-h // s), -(-w // s), self.spec.out_channels)

    def param_shapes(self, input_shape: Shape) -> Dict[str, Shape]:
        k = self.spec.kernel
        return {"kernel": (k, k, input_shape[2], self.spec.out_channels), "bias": (self.spec.out_channels,)}

    def initialize(self, rng):
        k, _, c, f = self.params["kernel"].shape
        self.params["kernel"][...] = F.he_uniform(rng, (k, k, c, f), k * k * c, self.params["kernel"].dtype)

    def _forward(self, x, training):
        return F.conv2d_forward(x, self.params["kernel"], self.params["bias"], self.spec.stride)

    def _backward(self, dout, cache):
        dx, dw, db = F.conv2d_backward(dout, cache)
        return dx, {"kernel": dw, "bias": db}


class PointwiseConv(Conv2D):
    """1 x 1 convolution, stride 1"""

    def output_shape(self, input_shape: Shape) -> Shape:
        return (input_shape[0], input_shape[1], self.spec.out_channels)

    def param_shapes(self, input_shape: Shape) -> Dict[str, Shape]:
        return {"kernel": (1, 1, input_shape[2], self.spec.out_channels), "bias": (self.spec.out_channels,)}

    def _forward(self, x, training):
        return F.conv2d_forward(x, self.params["kernel"], self.params["bias"], 1)


class DepthwiseConv2D(Layer):
    def output_shape(self, input_shape: Shape) -> Shape:
        h, w, c = input_shape
        s = self.spec.stride
        return (-(-h // s), -(-w // s), c)

    def param_shapes(self, input_shape: Shape) -> Dict[str, Shape]:
        k = self.spec.kernel
        return {"kernel": (k, k, input_shape[2]), "bias": (input_shape[2],)}

    def initialize(self, rng):
        k, _, c = self.params["kernel"].shape
        self.params["kernel"][...] = F.he_uniform(rng, (k, k, c), k * k, self.params["kernel"].dtype)

    def _forward(self, x, training):
        return F.depthwise_forward(x, self.params["kernel"], self.params["bias"], self.spec.stride)

    def _backward(self, dout, cache):
        dx, dw, db = F.depthwise_backward(dout, cache)
        return dx, {"kernel": dw, "bias": db}


class BatchNorm(Layer):
    """Running statistics live in buffers and start at mean 0, variance 1."""

    def output_shape(self, input_shape: Shape) -> Shape:
        return tuple(input_shape)

    def param_shapes(self, input_shape: Shape) -> Dict[str, Shape]:
        channels = input_shape[-1]
        return {"gamma": (channels,), "beta": (channels,)}

    def build(self, input_shape, rng, dtype):
        out = super().build(input_shape, rng, dtype)
        channels = input_shape[-1]
        self.params["gamma"][...] = 1.0
        self.buffers = {"mean": np.zeros(channels, dtype=dtype), "var": np.ones(channels, dtype=dtype)}
        return out

    def _forward(self, x, training):
        return F.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"], self.buffers, training,
            self.spec.momentum, self.spec.epsilon,
        )

    def _backward(self, dout, cache):
        dx, dgamma, dbeta = F.batchnorm_backward(dout, cache)
        return dx, {"gamma": dgamma, "beta": dbeta}


class ReLU(Layer):
    def output_shape(self, input_shape: Shape) -> Shape:
        return tuple(input_shape)

    def _forward(self, x, training):
        return F.relu_forward(x)

    def _backward(self, dout, cache):
        return F.relu_backward(dout, cache), {}


class MaxPool(Layer):
    def output_shape(self, input_shape: Shape) -> Shape:
        h, w, c = input_shape
        size = self.spec.size
        return (h // F.pool_window(size, h), w // F.pool_window(size, w), c)

    def _forward(self, x, training):
        return F.maxpool_forward(x, self.spec.size)

    def _backward(self, dout, cache):
        return F.maxpool_backward(dout, cache), {}


class GlobalAvgPool(Layer):
    def output_shape(self, input_shape: Shape) -> Shape:
        return (input_shape[2],)

    def _forward(self, x, training):
        return F.global_avg_pool_forward(x)

    def _backward(self, dout, cache):
        return F.global_avg_pool_backward(dout, cache), {}


class Flatten(Layer):
    def output_shape(self, input_shape: Shape) -> Shape:
        return (int(np.prod(input_shape)),)

    def _forward(self, x, training):
        return F.flatten_forward(x)

    def _backward(self, dout, cache):
        return F.flatten_backward(dout, cache), {}


class Dense(Layer):
    def output_shape(self, input_shape: Shape) -> Shape:
        return (self.spec.units,)

    def param_shapes(self, input_shape: Shape) -> Dict[str, Shape]:
        if len(input_shape) != 1:
            raise ShapeMismatchError(f"{self.kind} expects flat features", "(D,)", tuple(input_shape))
        return {"kernel": (input_shape[0], self.spec.units), "bias": (self.spec.units,)}

    def initialize(self, rng):
        d, u = self.params["kernel"].shape
        self.params["kernel"][...] = F.he_uniform(rng, (d, u), d, self.params["kernel"].dtype)

    def _forward(self, x, training):
        return F.dense_forward(x, self.params["kernel"], self.params["bias"])

    def _backward(self, dout, cache):
        dx, dw, db = F.dense_backward(dout, cache)
        return dx, {"kernel": dw, "bias": db}


class OutputHead(Dense):
    """Linear (valence, arousal) units, unclamped"""

    def initialize(self, rng):
        d, u = self.params["kernel"].shape
        self.params["kernel"][...] = F.glorot_uniform(rng, (d, u), d, u, self.params["kernel"].dtype)


LAYER_TYPES: Dict[Type, Type[Layer]] = {
    Conv2DSpec: Conv2D,
    DepthwiseConv2DSpec: DepthwiseConv2D,
    PointwiseConvSpec: PointwiseConv,
    BatchNormSpec: BatchNorm,
    ReLUSpec: ReLU,
    MaxPoolSpec: MaxPool,
    GlobalAvgPoolSpec: GlobalAvgPool,
    FlattenSpec: Flatten,
    DenseSpec: Dense,
    OutputHeadSpec: OutputHead,
}


def make_layer(spec: LayerSpec) -> Layer:
    factory: Optional[Callable[[LayerSpec], Layer]] = LAYER_TYPES.get(type(spec))
    if factory is None:
        raise ValueError(f"Unknown layer spec: {spec!r}")
    return factory(spec)
