"""
Annotation Parsing and Data Set Splitting
Reads landmark/label annotations, enforces label eligibility and carves reproducible splits
"""

import csv
import logging
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

from pydantic import ValidationError

from errors import AnnotationParseError
from schemas import SCHEMA_VERSION
from schemas.affect import LABEL_OUT_OF_RANGE, LANDMARK_COUNT, AnnotationRecord, Rejection, RowDiagnostic, SplitManifest
from seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

T = TypeVar("T")

ANNOTATION_COLUMNS = 1 + 2 * LANDMARK_COUNT + 2
HEADER = ["image_path"] + [f"{axis}{i}" for i in range(LANDMARK_COUNT) for axis in ("x", "y")] + ["valence", "arousal"]

ID_MARKER = "- "
SECTION_LINES = ("[train]", "[validation]", "[test]")


def parse_annotations(
    path: Union[str, Path], strict: bool = False
) -> Tuple[List[AnnotationRecord], List[RowDiagnostic]]:
    """
    Parse an annotation CSV: image path, 68 (x, y) pairs in iBUG order, valence, arousal.
    A leading header row and blank lines are skipped; the image path is kept byte for byte.
    Malformed rows are returned as diagnostics (or raised when strict) and never dropped silently.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Annotation file not found: {path}")

    records: List[AnnotationRecord] = []
    diagnostics: List[RowDiagnostic] = []

    with path.open("r", encoding="utf-8", newline="") as handle:
        for line_number, row in enumerate(csv.reader(handle), start=1):
            if not row or not "".join(row).strip():
                continue
            if line_number == 1 and row[0] == "image_path":
                continue
            try:
                records.append(_parse_row(row, line_number))
            except AnnotationParseError as e:
                if strict:
                    raise
                logger.warning(f"Skipping malformed annotation {path.name}:{e}")
                diagnostics.append(RowDiagnostic(row=e.row, message=e.message))

    logger.info(f"Parsed {len(records)} records from {path} ({len(diagnostics)} malformed rows)")
    return records, diagnostics


def _parse_row(row: List[str], line_number: int) -> AnnotationRecord:
    if len(row) != ANNOTATION_COLUMNS:
        raise AnnotationParseError(
            line_number, f"expected {ANNOTATION_COLUMNS} columns, got {len(row)}"
        )
    try:
        values = [float(cell) for cell in row[1:]]
    except ValueError as e:
        raise AnnotationParseError(line_number, f"non-numeric value ({e})") from e

    coords = values[: 2 * LANDMARK_COUNT]
    landmarks = [(coords[2 * i], coords[2 * i + 1]) for i in range(LANDMARK_COUNT)]
    try:
        return AnnotationRecord(
            image_path=row[0], landmarks=landmarks, valence=values[-2], arousal=values[-1]
        )
    except ValidationError as e:
        raise AnnotationParseError(line_number, e.errors()[0]["msg"]) from e


def serialize_annotations(records: Sequence[AnnotationRecord], path: Union[str, Path]) -> None:
    """Write records in the annotation format; floats use their shortest exact repr."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HEADER)
        for record in records:
            coords = [repr(float(c)) for point in record.landmarks for c in point]
            writer.writerow([record.image_path, *coords, repr(record.valence), repr(record.arousal)])


class LabelValidator:
    """
    Label eligibility for the affect data set
    """

    def __init__(self, label_range: Tuple[float, float] = (-1.0, 1.0)):
        self.validation_rules = {
            "label_min": label_range[0],
            "label_max": label_range[1],
        }

    def in_range(self, value: float) -> bool:
        return self.validation_rules["label_min"] <= value <= self.validation_rules["label_max"]

    def validate_record(self, record: AnnotationRecord) -> Optional[Rejection]:
        """None when the record is eligible, otherwise the rejection"""
        for name, value in (("valence", record.valence), ("arousal", record.arousal)):
            if not self.in_range(value):
                return Rejection(
                    reason=LABEL_OUT_OF_RANGE, record_id=record.record_id, detail=f"{name}={value}"
                )
        return None

    def validate_batch(self, records: Sequence[AnnotationRecord]) -> Dict[str, Any]:
        """
        Validate a batch of records and return summary statistics
        """
        kept, rejected = self.filter(records)
        total = len(records)
        return {
            "total_records": total,
            "valid_records": len(kept),
            "rejected_records": len(rejected),
            "validation_rate": len(kept) / total if total > 0 else 0,
        }

    def filter(self, records: Sequence[AnnotationRecord]) -> Tuple[List[AnnotationRecord], List[Rejection]]:
        kept: List[AnnotationRecord] = []
        rejected: List[Rejection] = []
        for record in records:
            rejection = self.validate_record(record)
            if rejection is None:
                kept.append(record)
            else:
                rejected.append(rejection)
        return kept, rejected


def filter_valid_labels(
    records: Sequence[AnnotationRecord], label_range: Tuple[float, float] = (-1.0, 1.0)
) -> Tuple[List[AnnotationRecord], List[Rejection]]:
    """Split records into those with both labels in the closed range and the rest."""
    kept, rejected = LabelValidator(label_range).filter(records)
    if rejected:
        logger.info(f"Rejected {len(rejected)} of {len(records)} records: {LABEL_OUT_OF_RANGE}")
    return kept, rejected


def validation_count(fraction: float, pool_size: int) -> int:
    """round(fraction * pool_size), halves rounded up, computed exactly in decimal"""
    exact = Decimal(str(fraction)) * pool_size
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def carve_validation(pool: Sequence[T], fraction: float, seed: int) -> Tuple[List[T], List[T]]:
    """
    Randomly set aside round(fraction * |pool|) entries as a validation set.
    Both returned lists keep the pool's original order.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"validation fraction must lie in (0, 1), got {fraction}")
    if len(pool) == 0:
        raise ValueError("cannot carve a validation set from an empty pool")

    count = validation_count(fraction, len(pool))
    rng = make_rng(derive_seed(seed, "validation-carve"))
    chosen = set(rng.permutation(len(pool))[:count].tolist())

    train = [item for i, item in enumerate(pool) if i not in chosen]
    validation = [item for i, item in enumerate(pool) if i in chosen]
    return train, validation


def build_split(
    train_pool_ids: Sequence[str],
    test_ids: Sequence[str],
    fraction: float = 0.01,
    seed: int = 0,
) -> SplitManifest:
    """Carve validation out of the training pool; the test pool passes through untouched."""
    train, validation = carve_validation(list(train_pool_ids), fraction, seed)
    manifest = SplitManifest(
        train=train, validation=validation, test=list(test_ids), seed=seed, validation_fraction=fraction
    )
    logger.info(f"Split manifest: {manifest.counts()}")
    return manifest


def write_split_manifest(manifest: SplitManifest, path: Union[str, Path]) -> None:
    """
    Plain text: a '#' title line, seed and fraction, then one '- <id>' line per record
    under each [section]. Ids are written verbatim after the marker.
    """
    lines = [
        f"# eyeaffect split manifest {SCHEMA_VERSION}",
        f"seed: {manifest.seed}",
        f"validation_fraction: {manifest.validation_fraction!r}",
    ]
    for section in ("train", "validation", "test"):
        lines.append(f"[{section}]")
        lines.extend(f"{ID_MARKER}{record_id}" for record_id in getattr(manifest, section))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_split_manifest(path: Union[str, Path]) -> SplitManifest:
    sections: Dict[str, List[str]] = {"train": [], "validation": [], "test": []}
    header: Dict[str, str] = {}
    current: Optional[str] = None

    for index, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n")):
        if current is not None and line.startswith(ID_MARKER):
            sections[current].append(line[len(ID_MARKER):])
        elif line in SECTION_LINES:
            current = line[1:-1]
        elif not line.strip() or (index == 0 and line.startswith("#")):
            continue
        elif current is None:
            key, _, value = line.partition(":")
            header[key.strip()] = value.strip()
        else:
            raise ValueError(f"Unexpected line {index + 1} in split manifest {path}: {line!r}")

    return SplitManifest(
        seed=int(header["seed"]),
        validation_fraction=float(header.get("validation_fraction", 0.01)),
        **sections,
    )


def split_count_table(initial: Dict[str, int], preprocessed: Dict[str, int]) -> str:
    """Initial vs. preprocessed sizes per split, one row each."""
    columns = ("train", "validation", "test")
    lines = [f"{'':<14}" + "".join(f"{c.capitalize():>12}" for c in columns)]
    for name, counts in (("Initial", initial), ("Preprocessed", preprocessed)):
        lines.append(f"{name:<14}" + "".join(f"{counts.get(c, 0):>12}" for c in columns))
    return "\n".join(lines)
