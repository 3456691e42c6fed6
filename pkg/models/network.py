"""
Network
An ordered layer list built from specs, with its parameters and shape table
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ShapeMismatchError
from nn.functional import check_finite
from nn.layers import Layer, make_layer
from schemas.config import ModelConfig
from schemas.layers import WEIGHTED_KINDS, LayerSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShapeRow:
    """One line of a network's shape table"""

    index: int
    kind: str
    name: str
    output_shape: Tuple[int, ...]
    params: int


def layer_name(spec: LayerSpec, input_channels: int) -> str:
    """Architecture-table naming: conv3-64, dw3-s2, conv1-128, FC-6144, ..."""
    kind = spec.kind
    if kind == "conv2d":
        suffix = f"-s{spec.stride}" if spec.stride != 1 else ""
        return f"conv{spec.kernel}-{spec.out_channels}{suffix}"
    if kind == "depthwise":
        return f"dw{spec.kernel}-{input_channels}-s{spec.stride}"
    if kind == "pointwise":
        return f"conv1-{spec.out_channels}"
    if kind == "dense":
        return f"FC-{spec.units}"
    if kind == "output_head":
        return f"FC-{spec.units} linear"
    if kind == "maxpool":
        return f"maxpool {spec.size}x{spec.size}"
    return {"batchnorm": "batch norm", "relu": "ReLU", "global_avg_pool": "avg pool", "flatten": "flatten"}[kind]


def plan(specs: Sequence[LayerSpec], input_shape: Tuple[int, ...]) -> List[ShapeRow]:
    """Shape table for specs on input_shape (no batch axis), without allocating parameters."""
    rows = []
    shape = tuple(input_shape)
    for index, spec in enumerate(specs):
        layer = make_layer(spec)
        params = int(sum(np.prod(s) for s in layer.param_shapes(shape).values()))
        name = layer_name(spec, shape[-1])
        shape = layer.output_shape(shape)
        if any(extent < 1 for extent in shape):
            raise ShapeMismatchError(f"layer {index} ({name}) collapses the feature map", "extents >= 1", shape)
        rows.append(ShapeRow(index, spec.kind, name, tuple(shape), params))
    return rows


def format_shape_table(rows: Sequence[ShapeRow], input_shape: Tuple[int, ...]) -> str:
    lines = [f"{'#':>3}  {'layer':<22} {'output':<18} {'params':>12}", f"{'':>3}  {'input':<22} {str(input_shape):<18}"]
    for row in rows:
        lines.append(f"{row.index:>3}  {row.name:<22} {str(row.output_shape):<18} {row.params:>12,}")
    lines.append(f"Total learnable parameters: {sum(r.params for r in rows):,}")
    return "\n".join(lines)


class Network:
    """
    Sequential model over (N, H, W, 3) inputs ending in the two-unit linear head.
    Parameters are addressed as "<layer index>.<name>".
    """

    def __init__(self, config: ModelConfig, specs: Sequence[LayerSpec], rng: Optional[np.random.Generator] = None):
        if not specs or specs[-1].kind != "output_head":
            raise ValueError("a network must end with the output head")
        self.config = config
        self.specs: List[LayerSpec] = list(specs)
        self.input_shape = config.input_shape
        self.dtype = np.dtype(config.dtype)
        self.layers: List[Layer] = []
        shape = self.input_shape
        for spec in self.specs:
            layer = make_layer(spec)
            shape = layer.build(shape, rng, config.dtype)
            self.layers.append(layer)
        self.output_shape = shape

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        """(N, H, W, 3) -> (N, 2); training selects batch statistics in batch norm."""
        if x.ndim != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatchError("network input", ("N",) + self.input_shape, x.shape)
        out = x if x.dtype == self.dtype else x.astype(self.dtype)
        for layer in self.layers:
            out = layer.forward(out, training)
        return check_finite("network output", out)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        """Gradient of the loss w.r.t. the input; parameter gradients land in each layer."""
        grad = dout.astype(self.dtype, copy=False)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def clear_caches(self) -> None:
        for layer in self.layers:
            layer.clear_cache()

    def parameters(self) -> Dict[str, np.ndarray]:
        return {f"{i}.{name}": p for i, layer in enumerate(self.layers) for name, p in layer.params.items()}

    def gradients(self) -> Dict[str, np.ndarray]:
        return {f"{i}.{name}": g for i, layer in enumerate(self.layers) for name, g in layer.grads.items()}

    def buffers(self) -> Dict[str, np.ndarray]:
        return {f"{i}.{name}": b for i, layer in enumerate(self.layers) for name, b in layer.buffers.items()}

    def layer_norms(self) -> Dict[str, float]:
        """L2 norm of every parameter tensor, for divergence diagnostics"""
        return {name: float(np.linalg.norm(p.astype(np.float64))) for name, p in self.parameters().items()}

    @property
    def head(self) -> Layer:
        return self.layers[-1]

    def shape_table(self) -> List[ShapeRow]:
        return plan(self.specs, self.input_shape)

    def describe(self) -> str:
        return format_shape_table(self.shape_table(), self.input_shape)

    @property
    def weighted_layer_count(self) -> int:
        """Convolution and fully connected layers before the output head"""
        return sum(1 for spec in self.specs if spec.kind in WEIGHTED_KINDS)

    def count_params(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))
