"""
Training Data Feed
Seeded shuffling, per-sample augmentation and optional threaded prefetch
"""

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from preprocessing.augment import augment_pipeline, augment_seed, prepare_input
from preprocessing.eyeslot import EyeSlot
from schemas.config import AugmentConfig
from seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

Batch = Tuple[np.ndarray, np.ndarray]


class SlotDataset:
    """
    Eye slots with their labels, turned into network inputs on demand.
    Augmented inputs depend only on (seed, epoch, sample index).
    """

    def __init__(
        self,
        slots: Sequence[EyeSlot],
        target: Tuple[int, int],
        dtype: str = "float32",
        augment: Optional[AugmentConfig] = None,
        seed: int = 0,
    ):
        self.slots = list(slots)
        self.target = target
        self.dtype = dtype
        self.augment = augment
        self.seed = seed
        self._plain: Dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def record_ids(self) -> List[str]:
        return [slot.record_id for slot in self.slots]

    def labels(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        chosen = range(len(self.slots)) if indices is None else indices
        return np.asarray([self.slots[i].label for i in chosen], dtype=self.dtype).reshape(-1, 2)

    def plain_input(self, index: int) -> np.ndarray:
        """Letterboxed and normalized, no random transforms; cached."""
        if index not in self._plain:
            self._plain[index] = prepare_input(self.slots[index].image, self.target, self.dtype)
        return self._plain[index]

    def augmented_input(self, index: int, epoch: int) -> np.ndarray:
        sample = augment_pipeline(
            self.slots[index], self.augment, augment_seed(self.seed, epoch, index), self.target, self.dtype
        )
        return sample.tensor

    def batch(self, indices: Sequence[int], epoch: int = 0, augment: bool = False) -> Batch:
        if augment and self.augment is not None:
            inputs = [self.augmented_input(i, epoch) for i in indices]
        else:
            inputs = [self.plain_input(i) for i in indices]
        return np.stack(inputs), self.labels(indices)


def batch_indices(size: int, batch_size: int, epoch: int, seed: int, shuffle: bool = True) -> List[np.ndarray]:
    """Full batches of a seeded permutation; a trailing partial batch is dropped."""
    order = make_rng(derive_seed(seed, "shuffle", epoch)).permutation(size) if shuffle else np.arange(size)
    count = size // batch_size
    return [order[i * batch_size:(i + 1) * batch_size] for i in range(count)]


def eval_indices(size: int, batch_size: int) -> List[np.ndarray]:
    """Sequential batches covering every sample, the last one possibly partial."""
    return [np.arange(start, min(start + batch_size, size)) for start in range(0, size, batch_size)]


def iterate_batches(
    dataset: SlotDataset,
    batches: Sequence[np.ndarray],
    epoch: int,
    augment: bool,
    workers: int = 0,
) -> Iterator[Batch]:
    """
    Batches in order. With workers > 0 up to 2 * workers batches are prepared ahead on a
    thread pool; results are identical either way.
    """
    if workers <= 0:
        for indices in batches:
            yield dataset.batch(indices, epoch, augment)
        return

    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = deque()
        queue = iter(batches)
        for indices in queue:
            pending.append(pool.submit(dataset.batch, indices, epoch, augment))
            if len(pending) >= 2 * workers:
                break
        while pending:
            yield pending.popleft().result()
            nxt = next(queue, None)
            if nxt is not None:
                pending.append(pool.submit(dataset.batch, nxt, epoch, augment))
