"""
Eye Slot Preprocessing Workflow
Annotations in, eye-slot PNGs plus manifest and rejection report out
"""

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from preprocessing.dataset import filter_valid_labels
from preprocessing.eyeslot import EyeSlot, draw_box_overlay, extract_eye_slot, read_image, write_image
from schemas.affect import UNREADABLE_IMAGE, AnnotationRecord, Rejection, SlotManifestRow
from schemas.config import EyeSlotConfig

MANIFEST_FILE = "slots.csv"
REPORT_FILE = "rejections.json"
SLOT_DIR = "slots"
OVERLAY_DIR = "overlays"

MANIFEST_COLUMNS = list(SlotManifestRow.model_fields)


def slot_file_name(record_id: str) -> str:
    """
    Flat, deterministic PNG name for a record id that may contain directories.
    A short BLAKE2b digest of the full id keeps ids that differ only in extension
    or separators apart.
    """
    stem = Path(record_id).with_suffix("").as_posix().strip("/").replace("/", "__")
    digest = hashlib.blake2b(record_id.encode("utf-8"), digest_size=6).hexdigest()
    return f"{stem}-{digest}.png"


class EyeSlotPreprocessor:
    """
    Turns annotation records into eye slots: label filtering, box fitting, de-rotation,
    cropping and eligibility. Writes accepted slots and a manifest row for every record.
    """

    def __init__(self, config: Optional[EyeSlotConfig] = None, workers: int = 0, debug_overlays: bool = False):
        self.config = config or EyeSlotConfig()
        self.workers = workers
        self.debug_overlays = debug_overlays
        self.logger = logging.getLogger("eyeslot_preprocessor")
        self.stats: Dict[str, Any] = {"initial": 0, "accepted": 0, "rejected": {}}

    def extract(self, record: AnnotationRecord, image_root: Union[str, Path]) -> Union[EyeSlot, Rejection]:
        """Extract one record's slot; an unreadable image becomes a rejection."""
        try:
            image = read_image(Path(image_root) / record.image_path)
        except (OSError, ValueError) as e:
            self.logger.warning(f"Cannot read {record.image_path}: {e}")
            return Rejection(reason=UNREADABLE_IMAGE, record_id=record.record_id, detail=str(e))
        return extract_eye_slot(image, record.landmarks, record.label, self.config, record.record_id)

    def extract_all(
        self, records: Sequence[AnnotationRecord], image_root: Union[str, Path]
    ) -> List[Union[EyeSlot, Rejection]]:
        """Order-preserving batch extraction, threaded when workers > 0."""
        show = self.logger.isEnabledFor(logging.INFO)
        if self.workers > 0:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = pool.map(lambda r: self.extract(r, image_root), records)
                return list(tqdm(results, total=len(records), desc="eye slots", disable=not show))
        return [self.extract(r, image_root) for r in tqdm(records, desc="eye slots", disable=not show)]

    def run(
        self,
        records: Sequence[AnnotationRecord],
        image_root: Union[str, Path],
        output_dir: Union[str, Path],
    ) -> Dict[str, Any]:
        """
        Execute the preprocessing workflow and return a summary with per-reason counts
        """
        output_dir = Path(output_dir)
        slot_dir = output_dir / SLOT_DIR
        slot_dir.mkdir(parents=True, exist_ok=True)

        self.logger.info(f"Step 1: Filtering labels of {len(records)} records")
        kept, rejections = filter_valid_labels(records, self.config.label_range)

        self.logger.info(f"Step 2: Extracting {len(kept)} eye slots")
        results = self.extract_all(kept, image_root)

        self.logger.info("Step 3: Writing slots and manifest")
        rows: List[SlotManifestRow] = []
        by_id = {r.record_id: r for r in kept}
        written: Dict[str, str] = {}
        for record, result in zip(kept, results):
            if isinstance(result, Rejection):
                rejections.append(result)
                continue
            name = slot_file_name(record.record_id)
            if written.setdefault(name, record.record_id) != record.record_id:
                raise ValueError(f"Slot name {name} shared by {written[name]} and {record.record_id}")
            write_image(result.image, slot_dir / name)
            if self.debug_overlays and result.box is not None:
                self._write_overlay(by_id[result.record_id], result, image_root, output_dir / OVERLAY_DIR / name)
            box = result.box
            rows.append(
                SlotManifestRow(
                    record_id=record.record_id, slot_path=f"{SLOT_DIR}/{name}",
                    valence=record.valence, arousal=record.arousal,
                    theta=box.theta, center_x=box.center[0], center_y=box.center[1],
                    width=box.width, height=box.height,
                )
            )

        records_by_id = {r.record_id: r for r in records}
        for rejection in rejections:
            source = records_by_id.get(rejection.record_id)
            rows.append(
                SlotManifestRow(
                    record_id=rejection.record_id,
                    valence=source.valence if source else 0.0,
                    arousal=source.arousal if source else 0.0,
                    status=rejection.reason,
                )
            )
            self.logger.warning(f"Rejected {rejection.record_id}: {rejection.reason} {rejection.detail}".rstrip())

        # Manifest follows annotation order regardless of which stage rejected a record
        order = {r.record_id: i for i, r in enumerate(records)}
        rows.sort(key=lambda row: order.get(row.record_id, len(order)))
        write_slot_manifest(rows, output_dir / MANIFEST_FILE)

        counts = dict(sorted(Counter(r.reason for r in rejections).items()))
        accepted = sum(1 for row in rows if row.accepted)
        self.stats = {"initial": len(records), "accepted": accepted, "rejected": counts}
        (output_dir / REPORT_FILE).write_text(json.dumps(self.stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")

        self.logger.info(f"Preprocessing complete: {accepted} of {len(records)} records accepted")
        return {
            "status": "success",
            "initial": len(records),
            "accepted": accepted,
            "rejected": counts,
            "manifest": str(output_dir / MANIFEST_FILE),
        }

    def _write_overlay(self, record: AnnotationRecord, slot: EyeSlot, image_root, path: Path) -> None:
        try:
            image = read_image(Path(image_root) / record.image_path)
        except OSError as e:
            self.logger.warning(f"Skipping overlay for {record.record_id}: {e}")
            return
        write_image(draw_box_overlay(image, slot.box), path)


def rejection_report(summary: Dict[str, Any]) -> str:
    """Plain-text initial to preprocessed shrinkage with per-reason counts."""
    lines = [f"Initial records:  {summary['initial']}", f"Accepted slots:   {summary['accepted']}"]
    for reason, count in summary["rejected"].items():
        lines.append(f"  {reason:<20} {count}")
    return "\n".join(lines)


def write_slot_manifest(rows: Sequence[SlotManifestRow], path: Union[str, Path]) -> None:
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=MANIFEST_COLUMNS)
    frame.to_csv(path, index=False)


def read_slot_manifest(path: Union[str, Path]) -> List[SlotManifestRow]:
    frame = pd.read_csv(
        path, keep_default_na=False, float_precision="round_trip",
        dtype={"record_id": str, "slot_path": str, "status": str},
    )
    return [SlotManifestRow(**row) for row in frame.to_dict(orient="records")]


def load_slots(
    manifest_path: Union[str, Path], record_ids: Optional[Sequence[str]] = None
) -> List[EyeSlot]:
    """
    Accepted slots from a manifest, optionally restricted to (and ordered by) record_ids.
    Ids without an accepted slot are skipped.
    """
    manifest_path = Path(manifest_path)
    rows = {row.record_id: row for row in read_slot_manifest(manifest_path) if row.accepted}
    wanted = list(record_ids) if record_ids is not None else list(rows)
    slots = []
    for record_id in wanted:
        row = rows.get(record_id)
        if row is None:
            continue
        image = read_image(manifest_path.parent / row.slot_path)
        slots.append(EyeSlot(image=image, valence=row.valence, arousal=row.arousal, record_id=record_id))
    return slots


def slot_labels(slots: Sequence[EyeSlot]) -> np.ndarray:
    return np.asarray([slot.label for slot in slots], dtype=np.float64).reshape(-1, 2)


def accepted_ids(manifest_path: Union[str, Path]) -> Tuple[List[str], List[str]]:
    """(accepted record ids, rejected record ids) in manifest order"""
    rows = read_slot_manifest(manifest_path)
    return [r.record_id for r in rows if r.accepted], [r.record_id for r in rows if not r.accepted]
