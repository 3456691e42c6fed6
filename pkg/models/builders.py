"""
Architecture Builders
VGG-style M1/M2 and MobileNet-style M3 layer lists, with channel scaling for desk-scale runs
"""

import logging
import math
from typing import List, Sequence, Tuple, Union

from models.network import Network, ShapeRow, plan
from schemas.config import ModelConfig
from schemas.layers import (
    BatchNormSpec, Conv2DSpec, DenseSpec, DepthwiseConv2DSpec, FlattenSpec, GlobalAvgPoolSpec,
    LayerSpec, MaxPoolSpec, OutputHeadSpec, PointwiseConvSpec, ReLUSpec,
)
from seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

# Block channels and fully connected units at full scale
VGG_CONFIGS = {
    "M1": {"blocks": (16, 32, 64, 128, 256, 512), "dense": (6144, 6144)},
    "M2": {"blocks": (64, 128, 256, 512, 512, 512), "dense": (6144, 6144, 2000)},
}

# (depthwise stride, pointwise channels) after the stride-2 stem convolution
MOBILENET_STEM = 32
MOBILENET_LADDER: Tuple[Tuple[int, int], ...] = (
    (1, 64), (2, 128), (1, 128), (2, 256), (1, 256), (2, 512),
    (1, 512), (1, 512), (1, 512), (1, 512), (1, 512),
    (2, 1024), (1, 1024),
)

MODEL_IDS = ("M1", "M2", "M3")


def scaled(count: int, factor: float) -> int:
    """ceil(count * factor), at least 1; rounded first so 6144 / 16 stays 384."""
    return max(1, math.ceil(round(count * factor, 9)))


def _conv_block(out_channels: int, stride: int, config: ModelConfig) -> List[LayerSpec]:
    return [
        Conv2DSpec(out_channels=out_channels, stride=stride),
        BatchNormSpec(momentum=config.bn_momentum, epsilon=config.bn_epsilon),
        ReLUSpec(),
    ]


def _vgg_specs(config: ModelConfig) -> List[LayerSpec]:
    layout = VGG_CONFIGS[config.id]
    specs: List[LayerSpec] = []
    for channels in layout["blocks"]:
        c = scaled(channels, config.channel_scale)
        specs += _conv_block(c, 1, config) + _conv_block(c, 1, config) + [MaxPoolSpec()]
    specs.append(FlattenSpec())
    for units in layout["dense"]:
        specs += [DenseSpec(units=scaled(units, config.channel_scale)), ReLUSpec()]
    specs.append(OutputHeadSpec())
    return specs


def _mobilenet_specs(config: ModelConfig) -> List[LayerSpec]:
    bn = dict(momentum=config.bn_momentum, epsilon=config.bn_epsilon)
    specs: List[LayerSpec] = _conv_block(scaled(MOBILENET_STEM, config.channel_scale), 2, config)
    for stride, channels in MOBILENET_LADDER:
        width = scaled(channels, config.channel_scale * config.width_multiplier)
        specs += [
            DepthwiseConv2DSpec(stride=stride), BatchNormSpec(**bn), ReLUSpec(),
            PointwiseConvSpec(out_channels=width), BatchNormSpec(**bn), ReLUSpec(),
        ]
    specs += [GlobalAvgPoolSpec(), OutputHeadSpec()]
    return specs


def model_specs(config: ModelConfig) -> List[LayerSpec]:
    if config.id in VGG_CONFIGS:
        return _vgg_specs(config)
    if config.id == "M3":
        return _mobilenet_specs(config)
    raise ValueError(f"Unknown model id: {config.id}")


def build(config: ModelConfig, seed: int = 0, initialize: bool = True) -> Network:
    """Deterministic for a fixed seed; initialize=False leaves every weight at zero."""
    rng = make_rng(derive_seed(seed, "init", MODEL_IDS.index(config.id))) if initialize else None
    network = Network(config, model_specs(config), rng)
    logger.info(
        f"Built {config.id} for {config.input_height}x{config.input_width}: "
        f"{network.weighted_layer_count} weighted layers, {network.count_params():,} parameters"
    )
    return network


def shape_table(config: ModelConfig) -> List[ShapeRow]:
    return plan(model_specs(config), config.input_shape)


def count_params(model: Union[Network, ModelConfig]) -> int:
    """Learnable scalars (weights, biases, batch-norm gamma and beta); configs are counted unbuilt."""
    if isinstance(model, Network):
        return model.count_params()
    return sum(row.params for row in shape_table(model))


def channel_sequence(specs: Sequence[LayerSpec]) -> List[int]:
    """Output channels of every channel-producing convolution, in order."""
    return [s.out_channels for s in specs if s.kind in ("conv2d", "pointwise")]
