"""
Evaluation Metrics
RMSE, Pearson correlation, concordance correlation and sign agreement for valence and arousal
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import MetricUndefinedError, NonFiniteError, ShapeMismatchError
from schemas.affect import AxisScores, EvaluationReport

logger = logging.getLogger(__name__)

METRICS = ("rmse", "corr", "ccc", "sagr")
AXES = ("valence", "arousal")
PREDICTION_COLUMNS = ["record_id", "valence_pred", "arousal_pred", "valence", "arousal"]


def _pair(pred, target) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ShapeMismatchError("metric inputs must have equal length", target.shape, pred.shape)
    if pred.size == 0:
        raise MetricUndefinedError("metric of an empty sequence")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise NonFiniteError("metric inputs contain NaN or Inf")
    return pred, target


def _clip_unit(value: float) -> float:
    return float(min(1.0, max(-1.0, value)))


def rmse(pred, target) -> float:
    """sqrt(mean((pred - target)^2))"""
    pred, target = _pair(pred, target)
    diff = pred - target
    return float(np.sqrt(np.mean(diff * diff)))


def pearson(pred, target) -> float:
    """Correlation with population (1/n) moments"""
    pred, target = _pair(pred, target)
    dp, dt = pred - pred.mean(), target - target.mean()
    var_p, var_t = np.mean(dp * dp), np.mean(dt * dt)
    if var_p == 0.0 or var_t == 0.0:
        raise MetricUndefinedError("undefined correlation: a sequence has zero variance")
    return _clip_unit(np.mean(dp * dt) / np.sqrt(var_p * var_t))


def ccc(pred, target) -> float:
    """
    2 cov(p, t) / (var(p) + var(t) + (mean(p) - mean(t))^2), population moments.
    A zero denominator means both sequences are the same constant: 1 when identical.
    """
    pred, target = _pair(pred, target)
    mean_p, mean_t = pred.mean(), target.mean()
    dp, dt = pred - mean_p, target - mean_t
    denominator = np.mean(dp * dp) + np.mean(dt * dt) + (mean_p - mean_t) ** 2
    if denominator == 0.0:
        if np.array_equal(pred, target):
            return 1.0
        raise MetricUndefinedError("undefined concordance: zero denominator for differing sequences")
    return _clip_unit(2.0 * np.mean(dp * dt) / denominator)


def sagr(pred, target) -> float:
    """Fraction of indices whose signs agree, with sign(0) = 0"""
    pred, target = _pair(pred, target)
    return float(np.mean(np.sign(pred) == np.sign(target)))


METRIC_FUNCTIONS = {"rmse": rmse, "corr": pearson, "ccc": ccc, "sagr": sagr}


def axis_scores(pred, target) -> AxisScores:
    return AxisScores(**{name: fn(pred, target) for name, fn in METRIC_FUNCTIONS.items()})


def evaluate_report(predictions, targets, model_id: str = "model") -> EvaluationReport:
    """All four metrics on column 0 (valence) and column 1 (arousal)."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.ndim != 2 or predictions.shape[1] != 2:
        raise ShapeMismatchError("evaluation expects aligned (n, 2) arrays", targets.shape, predictions.shape)
    return EvaluationReport(
        model_id=model_id,
        samples=len(predictions),
        valence=axis_scores(predictions[:, 0], targets[:, 0]),
        arousal=axis_scores(predictions[:, 1], targets[:, 1]),
    )


def format_score(value: float) -> str:
    """Three decimals without the leading zero: .456, -.123, 1.000"""
    text = f"{value:.3f}"
    if text.startswith("0."):
        return text[1:]
    if text.startswith("-0."):
        return "-" + text[2:]
    return text


def _best(reports: Sequence[EvaluationReport]) -> Dict[Tuple[str, str], float]:
    best = {}
    for axis in AXES:
        for metric in METRICS:
            values = [r.cell(metric, axis) for r in reports]
            best[(axis, metric)] = min(values) if metric == "rmse" else max(values)
    return best


def format_report_table(reports: Union[EvaluationReport, Sequence[EvaluationReport]]) -> str:
    """
    One row per model; valence then arousal, each with RMSE, CORR, CCC and SAGR.
    With several models the best value per column carries a trailing '*'.
    """
    if isinstance(reports, EvaluationReport):
        reports = [reports]
    if not reports:
        raise ValueError("no reports to format")
    mark = len(reports) > 1
    best = _best(reports)

    width = 8
    model_width = max(6, *(len(r.model_id) for r in reports))
    group = width * len(METRICS)
    lines = [
        f"{'':<{model_width}}  {'Valence':^{group}}  {'Arousal':^{group}}",
        f"{'Model':<{model_width}}  "
        + "".join(f"{m.upper():>{width}}" for m in METRICS) + "  "
        + "".join(f"{m.upper():>{width}}" for m in METRICS),
    ]
    for report in reports:
        cells = []
        for axis in AXES:
            text = ""
            for metric in METRICS:
                value = report.cell(metric, axis)
                star = "*" if mark and value == best[(axis, metric)] else ""
                text += f"{format_score(value) + star:>{width}}"
            cells.append(text)
        lines.append(f"{report.model_id:<{model_width}}  {cells[0]}  {cells[1]}")
    return "\n".join(lines)


def write_report(reports: Union[EvaluationReport, Sequence[EvaluationReport]], path: Union[str, Path]) -> None:
    """Key-value JSON: one object per model."""
    if isinstance(reports, EvaluationReport):
        reports = [reports]
    payload = {r.model_id: r.model_dump(exclude={"model_id"}) for r in reports}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_predictions(
    path: Union[str, Path], predictions: np.ndarray, targets: np.ndarray, record_ids: Optional[Sequence[str]] = None
) -> None:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    ids = list(record_ids) if record_ids is not None else [str(i) for i in range(len(predictions))]
    frame = pd.DataFrame({
        "record_id": ids,
        "valence_pred": predictions[:, 0], "arousal_pred": predictions[:, 1],
        "valence": targets[:, 0], "arousal": targets[:, 1],
    })
    frame.to_csv(path, index=False, columns=PREDICTION_COLUMNS)


def read_predictions(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """(predictions n x 2, targets n x 2, record ids)"""
    frame = pd.read_csv(path, float_precision="round_trip", dtype={"record_id": str}, keep_default_na=False)
    missing = [c for c in PREDICTION_COLUMNS[1:] if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing prediction columns {missing}")
    predictions = frame[["valence_pred", "arousal_pred"]].to_numpy(dtype=np.float64)
    targets = frame[["valence", "arousal"]].to_numpy(dtype=np.float64)
    ids = frame["record_id"].tolist() if "record_id" in frame.columns else [str(i) for i in range(len(frame))]
    return predictions, targets, ids
