"""
Affect Data Schemas for EyeAffect
Records that flow between preprocessing, splitting, training and evaluation
"""

import math
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

LANDMARK_COUNT = 68

LABEL_OUT_OF_RANGE = "label out of range"
PORTRAIT_ASPECT = "portrait aspect"
NON_POSITIVE_SIZE = "non-positive size"
EMPTY_CROP = "empty crop"
CLIPPED_CROP = "crop clipped"
UNREADABLE_IMAGE = "unreadable image"
MALFORMED_ROW = "malformed row"

RejectionReason = Literal[
    "label out of range", "portrait aspect", "non-positive size",
    "empty crop", "crop clipped", "unreadable image", "malformed row"
]


class AnnotationRecord(BaseModel):
    """
    One source image with its 68 facial landmarks and a valence/arousal label.
    The image path doubles as the record id.
    """

    model_config = ConfigDict(frozen=True)

    image_path: str = Field(..., min_length=1, description="Image file, relative to the image root")
    landmarks: Tuple[Tuple[float, float], ...] = Field(
        ..., description="68 (x, y) points in iBUG order, pixels"
    )
    valence: float = Field(..., description="Unpleasant (-1) to pleasant (+1)")
    arousal: float = Field(..., description="Calm (-1) to agitated (+1)")

    @field_validator("image_path")
    @classmethod
    def validate_image_path(cls, v):
        # Ids are stored one per line in split manifests
        if "\n" in v or "\r" in v:
            raise ValueError("image path must not contain line breaks")
        return v

    @field_validator("landmarks")
    @classmethod
    def validate_landmarks(cls, v):
        if len(v) != LANDMARK_COUNT:
            raise ValueError(f"expected {LANDMARK_COUNT} landmarks, got {len(v)}")
        if not all(math.isfinite(x) and math.isfinite(y) for x, y in v):
            raise ValueError("landmark coordinates must be finite")
        return v

    @field_validator("valence", "arousal")
    @classmethod
    def validate_label(cls, v):
        # Range is enforced by filtering, not parsing; only finiteness is a parse concern
        if not math.isfinite(v):
            raise ValueError("label must be finite")
        return v

    @property
    def record_id(self) -> str:
        return self.image_path

    @property
    def label(self) -> Tuple[float, float]:
        return (self.valence, self.arousal)

    def landmark_array(self) -> np.ndarray:
        return np.asarray(self.landmarks, dtype=np.float64)


class Rejection(BaseModel):
    """A record or slot that did not make it into the data set, and why"""

    model_config = ConfigDict(frozen=True)

    reason: RejectionReason
    record_id: str = ""
    detail: str = ""


class RowDiagnostic(BaseModel):
    """A malformed annotation row, reported by row number"""

    row: int = Field(..., ge=1, description="1-based line number in the annotation file")
    message: str


class SplitManifest(BaseModel):
    """
    Record ids per split. The validation list is carved from the training pool;
    the test list comes from a separately provided pool.
    """

    train: List[str] = Field(default_factory=list)
    validation: List[str] = Field(default_factory=list)
    test: List[str] = Field(default_factory=list)
    seed: int = Field(..., description="Seed the validation carve was drawn with")
    validation_fraction: float = Field(0.01, gt=0, lt=1)

    @model_validator(mode="after")
    def validate_disjoint(self):
        train, validation, test = set(self.train), set(self.validation), set(self.test)
        if train & validation or train & test or validation & test:
            raise ValueError("split lists must be pairwise disjoint")
        return self

    def counts(self) -> Dict[str, int]:
        return {"train": len(self.train), "validation": len(self.validation), "test": len(self.test)}


class SlotManifestRow(BaseModel):
    """One row of the eye-slot manifest written by preprocessing"""

    record_id: str
    slot_path: str = Field("", description="Written PNG, empty when rejected")
    valence: float
    arousal: float
    theta: float = Field(0.0, description="Eye-axis rotation in degrees")
    center_x: float = 0.0
    center_y: float = 0.0
    width: float = 0.0
    height: float = 0.0
    status: str = Field("accepted", description="'accepted' or a rejection reason")

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


class LossRecord(BaseModel):
    """Mean losses of one completed epoch"""

    epoch: int = Field(..., ge=0)
    train_loss: float = Field(..., ge=0)
    val_loss: Optional[float] = Field(None, ge=0)
    seconds: float = Field(0.0, ge=0, description="Wall-clock time of the epoch")


class TrainHistory(BaseModel):
    """Per-epoch losses of a training run"""

    model_id: str = "model"
    records: List[LossRecord] = Field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.records)

    @property
    def total_seconds(self) -> float:
        return sum(record.seconds for record in self.records)

    def best(self) -> Optional[LossRecord]:
        scored = [r for r in self.records if r.val_loss is not None]
        return min(scored, key=lambda r: r.val_loss) if scored else None


class AxisScores(BaseModel):
    """The four evaluation metrics for one output"""

    rmse: float = Field(..., ge=0)
    corr: float = Field(..., ge=-1, le=1)
    ccc: float = Field(..., ge=-1, le=1)
    sagr: float = Field(..., ge=0, le=1)


class EvaluationReport(BaseModel):
    """Valence and arousal scores of one model on one data set"""

    model_id: str = "model"
    samples: int = Field(..., ge=1)
    valence: AxisScores
    arousal: AxisScores

    def cell(self, metric: str, axis: str) -> float:
        return getattr(getattr(self, axis), metric)
