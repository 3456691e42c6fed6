"""
Exception hierarchy for the EyeAffect pipeline
Every failure raised by library code derives from EyeAffectError
"""

from typing import Dict, Optional


class EyeAffectError(Exception):
    """Base class for all pipeline errors"""


class AnnotationParseError(EyeAffectError):
    """A malformed annotation row"""

    def __init__(self, row: int, message: str):
        self.row = row
        self.message = message
        super().__init__(f"row {row}: {message}")


class DegenerateRegionError(EyeAffectError):
    """The ocular point set spans zero area"""


class ShapeMismatchError(EyeAffectError, ValueError):
    """Two tensors whose shapes must agree do not"""

    def __init__(self, message: str, expected=None, actual=None):
        self.expected = expected
        self.actual = actual
        if expected is not None or actual is not None:
            message = f"{message}: expected {expected}, got {actual}"
        super().__init__(message)


class LayerStateError(EyeAffectError, RuntimeError):
    """A layer was used out of order (backward before forward)"""


class NonFiniteError(EyeAffectError, FloatingPointError):
    """NaN or Inf appeared in a tensor"""


class TrainingDivergedError(NonFiniteError):
    """The training loss became non-finite"""

    def __init__(self, epoch: int, batch: int, layer_norms: Optional[Dict[str, float]] = None):
        self.epoch = epoch
        self.batch = batch
        self.layer_norms = layer_norms or {}
        worst = sorted(self.layer_norms.items(), key=lambda item: -item[1])[:3]
        summary = ", ".join(f"{name}={norm:.3g}" for name, norm in worst)
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch} (largest norms: {summary or 'n/a'})")


class CheckpointError(EyeAffectError):
    """A checkpoint file is damaged or of an unsupported version"""


class MetricUndefinedError(EyeAffectError, ValueError):
    """A metric has no defined value for the given inputs"""
