"""
Configuration Schemas for EyeAffect
Defaults reproduce every constant of the published pipeline
"""

import json
import os
from pathlib import Path
from typing import Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Range = Tuple[float, float]


class EyeSlotConfig(BaseModel):
    """Ocular box geometry and eligibility rules"""

    horizontal_expansion: float = Field(0.10, ge=0, description="Fractional width increase of the minimal box")
    vertical_expansion: float = Field(0.25, ge=0, description="Fractional height increase of the minimal box")
    max_clipped_fraction: float = Field(
        0.5, ge=0, le=1, description="Largest share of the box area that may fall outside the image"
    )
    label_range: Range = Field((-1.0, 1.0), description="Closed interval valid for valence and arousal")

    @field_validator("label_range")
    @classmethod
    def validate_label_range(cls, v):
        if v[0] > v[1]:
            raise ValueError(f"label range low {v[0]} exceeds high {v[1]}")
        return v


class AugmentConfig(BaseModel):
    """Training-time transformation ranges (magnitudes; signs are drawn separately)"""

    brightness_range: Range = Field((0.5, 1.5), description="HLS lightness factor")
    rotation_range: Range = Field((0.0, 5.0), description="Degrees")
    width_shift_range: Range = Field((0.0, 0.10), description="Fraction of slot width")
    height_shift_range: Range = Field((0.0, 0.10), description="Fraction of slot height")
    shear_range: Range = Field((0.0, 0.01), description="Radians, horizontal shear")
    hflip_enabled: bool = Field(True, description="Mirror with probability 0.5")

    @field_validator(
        "brightness_range", "rotation_range", "width_shift_range", "height_shift_range", "shear_range"
    )
    @classmethod
    def validate_range(cls, v, info):
        low, high = v
        if low > high:
            raise ValueError(f"{info.field_name}: low {low} exceeds high {high}")
        if low < 0:
            raise ValueError(f"{info.field_name}: magnitudes must be non-negative")
        return v

    @field_validator("brightness_range")
    @classmethod
    def validate_brightness(cls, v):
        if v[0] <= 0:
            raise ValueError("brightness factor must be positive")
        return v

    @classmethod
    def identity(cls) -> "AugmentConfig":
        """Every range collapsed onto its neutral value and flipping off."""
        return cls(
            brightness_range=(1.0, 1.0), rotation_range=(0.0, 0.0), width_shift_range=(0.0, 0.0),
            height_shift_range=(0.0, 0.0), shear_range=(0.0, 0.0), hflip_enabled=False,
        )


class ModelConfig(BaseModel):
    """Which architecture to build and at what scale"""

    model_config = ConfigDict(protected_namespaces=())

    id: Literal["M1", "M2", "M3"] = "M1"
    input_height: int = Field(170, gt=0)
    input_width: int = Field(512, gt=0)
    width_multiplier: float = Field(1.0, gt=0, le=1, description="MobileNet width multiplier (M3 only)")
    channel_scale: float = Field(1.0, gt=0, le=1, description="Uniform shrink of every channel and unit count")
    dtype: Literal["float32", "float64"] = "float32"
    bn_momentum: float = Field(0.99, ge=0, lt=1)
    bn_epsilon: float = Field(1e-3, gt=0)

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return (self.input_height, self.input_width, 3)

    @classmethod
    def desk(cls, id: str = "M1", dtype: str = "float64", **overrides) -> "ModelConfig":
        """24x64 input at 1/16 of the channels: every layer type, CPU-sized."""
        values = dict(id=id, input_height=24, input_width=64, channel_scale=1 / 16, dtype=dtype)
        values.update(overrides)
        return cls(**values)


class AdamConfig(BaseModel):
    alpha: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)


class TrainConfig(BaseModel):
    """Epoch loop settings"""

    batch_size: int = Field(16, ge=2, description="Batch size; at least 2 for batch normalization")
    epochs: int = Field(50, ge=1)
    adam: AdamConfig = Field(default_factory=AdamConfig)
    seed: int = 0
    shuffle: bool = True
    augment: bool = True
    workers: int = Field(0, ge=0, description="Prefetch threads; 0 prepares batches inline")
    checkpoint_dir: Optional[str] = None


class PipelineConfig(BaseModel):
    """Everything one end-to-end run needs"""

    annotations: Optional[str] = None
    test_annotations: Optional[str] = None
    image_root: str = "."
    output_dir: str = "runs"
    eyeslot: EyeSlotConfig = Field(default_factory=EyeSlotConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    validation_fraction: float = Field(0.01, gt=0, lt=1)
    seed: int = 0
    workers: int = Field(0, ge=0)

    @model_validator(mode="after")
    def propagate_seed(self):
        # One seed drives the run; the train loop reads it from its own section
        self.train.seed = self.seed
        return self


def load_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """
    Defaults, then the JSON file (if any), then environment overrides.
    CLI flags are applied on top by the caller.
    """
    data = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    if os.getenv("EYEAFFECT_SEED"):
        data["seed"] = int(os.environ["EYEAFFECT_SEED"])
    if os.getenv("EYEAFFECT_OUTPUT_DIR"):
        data["output_dir"] = os.environ["EYEAFFECT_OUTPUT_DIR"]
    return PipelineConfig.model_validate(data)
