"""
Schemas for EyeAffect
Unified records for ocular-region affect regression
"""

from schemas.affect import (
    AnnotationRecord, AxisScores, EvaluationReport, LossRecord, Rejection, RowDiagnostic,
    SlotManifestRow, SplitManifest, TrainHistory,
)
from schemas.config import (
    AdamConfig, AugmentConfig, EyeSlotConfig, ModelConfig, PipelineConfig, TrainConfig, load_config,
)
from schemas.layers import LAYER_SPECS, LayerSpec

# Schema registry for version management
SCHEMA_VERSION = "1.0.0"
SCHEMA_REGISTRY = {
    "annotation": AnnotationRecord,
    "slot": SlotManifestRow,
    "split": SplitManifest,
    "history": TrainHistory,
    "report": EvaluationReport,
    "pipeline": PipelineConfig,
}

__all__ = [
    "AdamConfig", "AnnotationRecord", "AugmentConfig", "AxisScores", "EvaluationReport",
    "EyeSlotConfig", "LAYER_SPECS", "LayerSpec", "LossRecord", "ModelConfig", "PipelineConfig",
    "Rejection", "RowDiagnostic", "SCHEMA_REGISTRY", "SCHEMA_VERSION", "SlotManifestRow",
    "SplitManifest", "TrainConfig", "TrainHistory", "load_config",
]
