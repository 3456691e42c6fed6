"""
Loss History Export
Two-panel train/validation loss plots, plottable CSV and the training-time table
"""

import logging
from pathlib import Path
from typing import List, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from schemas.affect import LossRecord, TrainHistory  # noqa: E402

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["model_id", "epoch", "train_loss", "val_loss", "seconds"]

Histories = Union[TrainHistory, Sequence[TrainHistory]]


def _as_list(histories: Histories) -> List[TrainHistory]:
    items = [histories] if isinstance(histories, TrainHistory) else list(histories)
    if not items or any(h.epochs == 0 for h in items):
        raise ValueError("cannot export an empty history")
    return items


def history_frame(histories: Histories) -> pd.DataFrame:
    rows = [
        {"model_id": h.model_id, **record.model_dump()}
        for h in _as_list(histories) for record in h.records
    ]
    return pd.DataFrame(rows, columns=HISTORY_COLUMNS)


def read_history_csv(path: Union[str, Path]) -> List[TrainHistory]:
    frame = pd.read_csv(path, float_precision="round_trip", dtype={"model_id": str})
    histories = []
    for model_id, group in frame.groupby("model_id", sort=False):
        records = [
            LossRecord(
                epoch=int(row.epoch), train_loss=float(row.train_loss),
                val_loss=None if pd.isna(row.val_loss) else float(row.val_loss), seconds=float(row.seconds),
            )
            for row in group.itertuples(index=False)
        ]
        histories.append(TrainHistory(model_id=str(model_id), records=records))
    return histories


def export_loss_plot(histories: Histories, path: Union[str, Path]) -> Path:
    """
    A .csv path gets the plottable table; any other suffix gets a figure with training
    loss on the left panel and validation loss on the right, one curve per model.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        history_frame(histories).to_csv(path, index=False)
        return path

    items = _as_list(histories)
    figure, (left, right) = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for history in items:
        epochs = [r.epoch + 1 for r in history.records]
        left.plot(epochs, [r.train_loss for r in history.records], label=history.model_id)
        scored = [(r.epoch + 1, r.val_loss) for r in history.records if r.val_loss is not None]
        if scored:
            right.plot(*zip(*scored), label=history.model_id)
    for axis, title in ((left, "Training loss"), (right, "Validation loss")):
        axis.set_title(title)
        axis.set_xlabel("Epoch")
        axis.grid(alpha=0.3)
        axis.legend()
    left.set_ylabel("MSE")
    figure.tight_layout()
    figure.savefig(path, dpi=120)
    plt.close(figure)
    logger.info(f"Wrote loss plot {path}")
    return path


def training_time_table(histories: Histories) -> str:
    lines = [f"{'Model':<8} {'Epochs':>7} {'Total (s)':>11} {'Per epoch (s)':>14}"]
    for h in _as_list(histories):
        lines.append(f"{h.model_id:<8} {h.epochs:>7} {h.total_seconds:>11.1f} {h.total_seconds / h.epochs:>14.2f}")
    return "\n".join(lines)
