"""
Training Loop
Epochs of shuffled, augmented mini-batches under the MSE dual loss and Adam
"""

import logging
import math
import time
from pathlib import Path
from typing import Optional, Union

import numpy as np
from tqdm import tqdm

from errors import NonFiniteError, ShapeMismatchError, TrainingDivergedError
from models.checkpoint import save_checkpoint
from models.network import Network
from nn.loss import mse_dual_loss
from nn.optim import AdamState, adam_step
from schemas.affect import LossRecord, TrainHistory
from schemas.config import TrainConfig
from training.data import SlotDataset, batch_indices, eval_indices, iterate_batches

LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"


def predict(network: Network, inputs: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Inference-mode forward pass (batch norm on running statistics), (n, 2)."""
    inputs = np.asarray(inputs)
    if inputs.ndim == 3:
        inputs = inputs[None]
    if inputs.ndim != 4 or tuple(inputs.shape[1:]) != network.input_shape:
        raise ShapeMismatchError("predict input", ("N",) + network.input_shape, inputs.shape)
    outputs = [network.forward(inputs[i:i + batch_size], training=False) for i in range(0, len(inputs), batch_size)]
    network.clear_caches()
    return np.concatenate(outputs, axis=0) if outputs else np.zeros((0, 2), dtype=network.dtype)


def evaluate_loss(network: Network, dataset: SlotDataset, batch_size: int = 16) -> Optional[float]:
    """Mean MSE over every sample in inference mode; None for an empty set."""
    if len(dataset) == 0:
        return None
    total = 0.0
    for indices in eval_indices(len(dataset), batch_size):
        x, y = dataset.batch(indices)
        loss, _ = mse_dual_loss(network.forward(x, training=False), y)
        total += loss * len(indices)
    network.clear_caches()
    return total / len(dataset)


class Trainer:
    """
    Owns one network and one optimizer for a run. Writes last and best-validation
    checkpoints every epoch when a checkpoint directory is configured.
    """

    def __init__(
        self,
        network: Network,
        config: Optional[TrainConfig] = None,
        model_id: Optional[str] = None,
        adam: Optional[AdamState] = None,
        start_epoch: int = 0,
        history: Optional[TrainHistory] = None,
    ):
        self.network = network
        self.config = config or TrainConfig()
        self.model_id = model_id or network.config.id
        self.adam = adam or AdamState.from_config(self.config.adam)
        self.start_epoch = start_epoch
        self.logger = logging.getLogger(f"trainer.{self.model_id}")
        self.checkpoint_dir = Path(self.config.checkpoint_dir) if self.config.checkpoint_dir else None
        self.history = history.model_copy(deep=True) if history is not None else TrainHistory(model_id=self.model_id)
        best = self.history.best()
        self.best_val: Optional[float] = best.val_loss if best is not None else None

    def train(self, train_set: SlotDataset, val_set: Optional[SlotDataset] = None) -> TrainHistory:
        """
        Execute the epoch loop and return the per-epoch history, including any epochs
        restored from a resumed run
        """
        gamma = self.config.batch_size
        if len(train_set) == 0:
            raise ValueError("training set is empty")
        if gamma > len(train_set):
            raise ValueError(f"batch size {gamma} exceeds the training set ({len(train_set)} samples)")

        history = self.history
        params = self.network.parameters()
        grads = self.network.gradients
        show = self.logger.isEnabledFor(logging.INFO)

        self.logger.info(
            f"Training {self.model_id}: {len(train_set)} samples, batch {gamma}, {self.config.epochs} epochs"
        )
        for epoch in range(self.start_epoch, self.start_epoch + self.config.epochs):
            started = time.perf_counter()
            batches = batch_indices(len(train_set), gamma, epoch, self.config.seed, self.config.shuffle)
            feed = iterate_batches(train_set, batches, epoch, self.config.augment, self.config.workers)

            losses = []
            for batch, (x, y) in enumerate(
                tqdm(feed, total=len(batches), desc=f"epoch {epoch + 1}", leave=False, disable=not show)
            ):
                try:
                    loss, dpred = mse_dual_loss(self.network.forward(x, training=True), y)
                    if not math.isfinite(loss):
                        raise NonFiniteError("non-finite loss")
                    self.network.backward(dpred)
                    adam_step(params, grads(), self.adam)
                except NonFiniteError as e:
                    error = TrainingDivergedError(epoch, batch, self.network.layer_norms())
                    self.logger.error(str(error))
                    raise error from e
                losses.append(loss)
            self.network.clear_caches()

            val_loss = evaluate_loss(self.network, val_set, gamma) if val_set is not None else None
            record = LossRecord(
                epoch=epoch, train_loss=float(np.mean(losses)), val_loss=val_loss,
                seconds=time.perf_counter() - started,
            )
            history.records.append(record)
            self._checkpoint(record, history)
            self.logger.info(
                f"Epoch {epoch + 1}: train {record.train_loss:.6f}"
                + (f", val {val_loss:.6f}" if val_loss is not None else "")
                + f" ({record.seconds:.1f}s)"
            )
        self.start_epoch += self.config.epochs
        return history

    def _checkpoint(self, record: LossRecord, history: TrainHistory) -> None:
        if self.checkpoint_dir is None:
            return
        metadata = {"epoch": record.epoch, "model_id": self.model_id, "history": history.model_dump()}
        save_checkpoint(self.network, self.checkpoint_dir / LAST_CHECKPOINT, self.adam, metadata)
        if record.val_loss is not None and (self.best_val is None or record.val_loss < self.best_val):
            self.best_val = record.val_loss
            save_checkpoint(self.network, self.checkpoint_dir / BEST_CHECKPOINT, self.adam, metadata)
            self.logger.info(f"New best validation loss {record.val_loss:.6f} at epoch {record.epoch + 1}")


def train(
    network: Network,
    train_set: SlotDataset,
    val_set: Optional[SlotDataset] = None,
    config: Optional[TrainConfig] = None,
    checkpoint_dir: Optional[Union[str, Path]] = None,
) -> TrainHistory:
    config = config or TrainConfig()
    if checkpoint_dir is not None:
        config = config.model_copy(update={"checkpoint_dir": str(checkpoint_dir)})
    return Trainer(network, config).train(train_set, val_set)
