"""
Synthetic Face Corpus
Rendered faces with exact landmarks and learnable labels, for desk-scale runs without licensed data
"""

import logging
import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import cv2
import numpy as np

from preprocessing.dataset import serialize_annotations
from preprocessing.eyeslot import write_image
from schemas.affect import AnnotationRecord
from seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

ANNOTATION_FILE = "annotations.csv"

# Face frame: origin between the eyes and slightly below, x right, y down, ~200 units across
RIGHT_EYE_CENTER = (-45.0, -30.0)
LEFT_EYE_CENTER = (45.0, -30.0)
MOUTH_CENTER = (0.0, 55.0)


def _eye(center: Tuple[float, float], openness: float) -> List[Tuple[float, float]]:
    # iBUG order: leftmost corner, two upper lid points, rightmost corner, two lower lid points
    cx, cy = center
    return [
        (cx - 15.0, cy), (cx - 5.0, cy - openness), (cx + 5.0, cy - openness),
        (cx + 15.0, cy), (cx + 5.0, cy + openness), (cx - 5.0, cy + openness),
    ]


def _lip(count: int, rx: float, ry: float, smile: float) -> List[Tuple[float, float]]:
    points = []
    for k in range(count):
        angle = math.pi - k * 2.0 * math.pi / count
        x = rx * math.cos(angle)
        y = MOUTH_CENTER[1] - ry * math.sin(angle) - smile * (x / rx) ** 2
        points.append((x, y))
    return points


def template_landmarks(valence: float = 0.0, arousal: float = 0.0) -> np.ndarray:
    """
    A frontal 68-point face in iBUG order, in face-frame units.
    Valence opens the eyes and curves the mouth; arousal raises the eyebrows.
    """
    jaw = [
        (-95.0 * math.cos(t), -10.0 + 110.0 * math.sin(t)) for t in np.linspace(0.0, math.pi, 17)
    ]
    lift = 6.0 * arousal
    brow_x = np.linspace(20.0, 75.0, 5)
    arch = [8.0 * math.sin(math.pi * k / 4.0) for k in range(5)]
    right_brow = [(-x, -55.0 - a - lift) for x, a in zip(brow_x[::-1], arch)]
    left_brow = [(x, -55.0 - a - lift) for x, a in zip(brow_x, arch)]
    bridge = [(0.0, y) for y in (-35.0, -20.0, -5.0, 10.0)]
    lower_nose = [(-16.0, 20.0), (-8.0, 23.0), (0.0, 25.0), (8.0, 23.0), (16.0, 20.0)]
    openness = max(6.0 + 3.0 * valence, 2.0)
    smile = 6.0 * valence

    points = (
        jaw + right_brow + left_brow + bridge + lower_nose
        + _eye(RIGHT_EYE_CENTER, openness) + _eye(LEFT_EYE_CENTER, openness)
        + _lip(12, 30.0, 12.0, smile) + _lip(8, 20.0, 5.0, smile)
    )
    return np.asarray(points, dtype=np.float64)


def _place(points: np.ndarray, rotation: float, scale: float, center: Tuple[float, float]) -> np.ndarray:
    rad = math.radians(rotation)
    c, s = math.cos(rad), math.sin(rad)
    rotated = points @ np.array([[c, -s], [s, c]]).T
    return rotated * scale + np.asarray(center)


def _render(landmarks: np.ndarray, rotation: float, scale: float, center, rng: np.random.Generator, size: int) -> np.ndarray:
    background = int(rng.integers(30, 90))
    skin = tuple(int(v) for v in rng.integers(150, 220, size=3))
    image = np.full((size, size, 3), background, dtype=np.uint8)

    axes = (int(round(100 * scale)), int(round(125 * scale)))
    origin = tuple(int(round(v)) for v in center)
    cv2.ellipse(image, origin, axes, rotation, 0, 360, skin, -1, cv2.LINE_AA)

    def poly(indices, closed, color, thickness):
        pts = np.round(landmarks[list(indices)]).astype(np.int32)
        cv2.polylines(image, [pts], closed, color, thickness, cv2.LINE_AA)

    brow_thickness = max(int(round(4 * scale)), 1)
    poly(range(0, 17), False, (90, 60, 50), 1)
    poly(range(17, 22), False, (40, 30, 20), brow_thickness)
    poly(range(22, 27), False, (40, 30, 20), brow_thickness)
    poly(range(27, 31), False, (120, 80, 70), 1)
    poly(range(31, 36), False, (120, 80, 70), 1)
    for eye in (range(36, 42), range(42, 48)):
        pts = np.round(landmarks[list(eye)]).astype(np.int32)
        cv2.fillPoly(image, [pts], (245, 245, 245), cv2.LINE_AA)
        iris = landmarks[list(eye)].mean(axis=0)
        radius = max(int(round(5 * scale)), 1)
        cv2.circle(image, tuple(int(round(v)) for v in iris), radius, (50, 40, 30), -1, cv2.LINE_AA)
        cv2.polylines(image, [pts], True, (30, 20, 20), 1, cv2.LINE_AA)
    poly(range(48, 60), True, (150, 60, 60), max(int(round(2 * scale)), 1))
    poly(range(60, 68), True, (110, 40, 40), 1)

    noise = rng.normal(0.0, 4.0, size=image.shape)
    return np.clip(image.astype(np.float64) + noise, 0, 255).astype(np.uint8)


def synthesize_face(
    seed: int,
    rotation: float = 0.0,
    size: int = 256,
    label: Optional[Tuple[float, float]] = None,
    portrait: bool = False,
) -> Tuple[np.ndarray, np.ndarray, Tuple[float, float]]:
    """
    Render one face rotated by a known angle (degrees, same convention as the eye axis).
    Returns (RGB image, 68 x 2 landmarks in pixels, (valence, arousal)).
    portrait squeezes the ocular features horizontally so the eye slot is taller than wide.
    """
    rng = make_rng(seed)
    if label is None:
        label = (float(rng.uniform(-1.0, 1.0)), float(rng.uniform(-1.0, 1.0)))
    valence, arousal = label

    template = template_landmarks(float(np.clip(valence, -1, 1)), float(np.clip(arousal, -1, 1)))
    if portrait:
        ocular = slice(17, 48)
        template[ocular, 0] *= 0.1

    scale = size / 256.0
    center = (size / 2.0, size / 2.0)
    landmarks = _place(template, rotation, scale, center)
    image = _render(landmarks, rotation, scale, center, rng, size)
    return image, landmarks, (float(valence), float(arousal))


def write_synthetic_corpus(
    directory: Union[str, Path],
    count: int,
    seed: int = 0,
    rotation_range: Tuple[float, float] = (-15.0, 15.0),
    invalid_fraction: float = 0.0,
    size: int = 256,
    annotation_name: str = ANNOTATION_FILE,
) -> Tuple[Path, List[AnnotationRecord]]:
    """
    Write count PNG faces and their annotation CSV under directory.
    The last round(invalid_fraction * count) rows are ineligible on purpose, alternating
    an out-of-range label and a portrait-shaped eye region.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if not 0.0 <= invalid_fraction <= 1.0:
        raise ValueError(f"invalid_fraction must lie in [0, 1], got {invalid_fraction}")

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    invalid = int(round(invalid_fraction * count))
    first_invalid = count - invalid

    records: List[AnnotationRecord] = []
    for i in range(count):
        sample_seed = derive_seed(seed, "synthetic", i)
        rng = make_rng(derive_seed(seed, "synthetic-pose", i))
        rotation = float(rng.uniform(*rotation_range)) if rotation_range[0] < rotation_range[1] else rotation_range[0]
        label, portrait = None, False
        if i >= first_invalid:
            if (i - first_invalid) % 2 == 0:
                label = (1.5, float(rng.uniform(-1.0, 1.0)))
            else:
                portrait = True

        image, landmarks, label = synthesize_face(sample_seed, rotation, size, label, portrait)
        name = f"face_{i:05d}.png"
        write_image(image, directory / name)
        records.append(
            AnnotationRecord(
                image_path=name,
                landmarks=[tuple(p) for p in landmarks.tolist()],
                valence=label[0],
                arousal=label[1],
            )
        )

    csv_path = directory / annotation_name
    serialize_annotations(records, csv_path)
    logger.info(f"Wrote {count} synthetic faces ({invalid} ineligible) to {directory}")
    return csv_path, records
