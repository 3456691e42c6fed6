"""
Layer Schemas
Declarative layer list that a Network is built from and a checkpoint records
"""

from typing import Annotated, List, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter


class _Spec(BaseModel):
    model_config = ConfigDict(frozen=True)


class Conv2DSpec(_Spec):
    kind: Literal["conv2d"] = "conv2d"
    out_channels: int = Field(..., gt=0)
    kernel: Literal[3] = 3
    stride: Literal[1, 2] = 1


class DepthwiseConv2DSpec(_Spec):
    kind: Literal["depthwise"] = "depthwise"
    kernel: Literal[3] = 3
    stride: Literal[1, 2] = 1


class PointwiseConvSpec(_Spec):
    kind: Literal["pointwise"] = "pointwise"
    out_channels: int = Field(..., gt=0)


class BatchNormSpec(_Spec):
    kind: Literal["batchnorm"] = "batchnorm"
    momentum: float = Field(0.99, ge=0, lt=1)
    epsilon: float = Field(1e-3, gt=0)


class ReLUSpec(_Spec):
    kind: Literal["relu"] = "relu"


class MaxPoolSpec(_Spec):
    kind: Literal["maxpool"] = "maxpool"
    size: Literal[2] = 2


class GlobalAvgPoolSpec(_Spec):
    kind: Literal["global_avg_pool"] = "global_avg_pool"


class FlattenSpec(_Spec):
    kind: Literal["flatten"] = "flatten"


class DenseSpec(_Spec):
    kind: Literal["dense"] = "dense"
    units: int = Field(..., gt=0)


class OutputHeadSpec(_Spec):
    """Two linear units: valence and arousal"""

    kind: Literal["output_head"] = "output_head"
    units: Literal[2] = 2


LayerSpec = Annotated[
    Union[
        Conv2DSpec, DepthwiseConv2DSpec, PointwiseConvSpec, BatchNormSpec, ReLUSpec,
        MaxPoolSpec, GlobalAvgPoolSpec, FlattenSpec, DenseSpec, OutputHeadSpec,
    ],
    Field(discriminator="kind"),
]

LAYER_SPECS = TypeAdapter(List[LayerSpec])

# Layers counted as "weighted" when naming an architecture (conv3-64, FC-6144, ...)
WEIGHTED_KINDS = frozenset({"conv2d", "depthwise", "pointwise", "dense"})
