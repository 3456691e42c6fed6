"""
Eye Slot Extraction
Expanded, de-rotated ocular bounding boxes from 68-point landmarks
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import cv2
import numpy as np
from PIL import Image

from errors import DegenerateRegionError
from schemas.affect import (
    CLIPPED_CROP, EMPTY_CROP, LABEL_OUT_OF_RANGE, NON_POSITIVE_SIZE, PORTRAIT_ASPECT, Rejection,
)
from schemas.config import EyeSlotConfig

logger = logging.getLogger(__name__)

# iBUG 68-point convention, 0-based, inclusive-exclusive ranges
LANDMARK_GROUPS: Dict[str, range] = {
    "jaw": range(0, 17),
    "right_eyebrow": range(17, 22),
    "left_eyebrow": range(22, 27),
    "nose_bridge": range(27, 31),
    "nose_lower": range(31, 36),
    "right_eye": range(36, 42),
    "left_eye": range(42, 48),
    "mouth_outer": range(48, 60),
    "mouth_inner": range(60, 68),
}

Label = Tuple[float, float]


@dataclass(frozen=True)
class RotatedBox:
    """
    Box in image pixels whose horizontal axis is rotated by theta degrees.
    raw_width/raw_height keep the minimal box before expansion.
    """

    center: Tuple[float, float]
    width: float
    height: float
    theta: float
    raw_width: float = 0.0
    raw_height: float = 0.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise DegenerateRegionError(f"box size must be positive, got {self.width}x{self.height}")
        if not -90.0 < self.theta <= 90.0:
            raise ValueError(f"theta must lie in (-90, 90], got {self.theta}")

    def corners(self) -> np.ndarray:
        """Four corners (top-left, top-right, bottom-right, bottom-left) in image coordinates."""
        return _box_corners(self.center, self.width, self.height, self.theta)

    def raw_box(self) -> "RotatedBox":
        return RotatedBox(self.center, self.raw_width, self.raw_height, self.theta, self.raw_width, self.raw_height)


@dataclass(frozen=True)
class EyeSlot:
    """A cropped, de-rotated ocular image with its label, before normalization"""

    image: np.ndarray = field(repr=False)
    valence: float
    arousal: float
    record_id: str = ""
    box: Optional[RotatedBox] = None

    @property
    def label(self) -> Label:
        return (self.valence, self.arousal)

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    @property
    def height(self) -> int:
        return int(self.image.shape[0])


@dataclass(frozen=True)
class Verdict:
    """Outcome of the eligibility rules"""

    accepted: bool
    reason: Optional[str] = None


ACCEPT = Verdict(accepted=True)


def _rotate(points: np.ndarray, degrees: float, origin: np.ndarray) -> np.ndarray:
    """Rotate by +degrees in image coordinates (x right, y down) about origin."""
    rad = math.radians(degrees)
    c, s = math.cos(rad), math.sin(rad)
    rotation = np.array([[c, -s], [s, c]])
    return (points - origin) @ rotation.T + origin


def _box_corners(center, width, height, theta) -> np.ndarray:
    hw, hh = width / 2.0, height / 2.0
    local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
    return _rotate(local, theta, np.zeros(2)) + np.asarray(center, dtype=np.float64)


def _as_points(landmarks) -> np.ndarray:
    points = np.asarray(landmarks, dtype=np.float64)
    if points.shape != (68, 2):
        raise ValueError(f"expected 68x2 landmarks, got {points.shape}")
    return points


def _centroid(points: np.ndarray, group: str) -> np.ndarray:
    return points[list(LANDMARK_GROUPS[group])].mean(axis=0)


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    direction = b - a
    length_sq = float(direction @ direction)
    if length_sq == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ direction / length_sq, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * direction), axis=1)


def nearest_nose_index(landmarks) -> int:
    """The nose-bridge landmark closest to the segment joining the eye centroids."""
    points = _as_points(landmarks)
    bridge = list(LANDMARK_GROUPS["nose_bridge"])
    distances = _segment_distance(points[bridge], _centroid(points, "right_eye"), _centroid(points, "left_eye"))
    return bridge[int(np.argmin(distances))]


def ocular_points(landmarks) -> np.ndarray:
    """Both eyebrows (10), both eyes (12) and the nearest nose-bridge point: 23 x 2."""
    points = _as_points(landmarks)
    indices = (
        list(LANDMARK_GROUPS["right_eyebrow"]) + list(LANDMARK_GROUPS["left_eyebrow"])
        + list(LANDMARK_GROUPS["right_eye"]) + list(LANDMARK_GROUPS["left_eye"])
        + [nearest_nose_index(points)]
    )
    return points[indices]


def normalize_angle(degrees: float) -> float:
    """Fold an axis angle into (-90, 90]."""
    folded = math.fmod(degrees, 180.0)
    if folded > 90.0:
        folded -= 180.0
    elif folded <= -90.0:
        folded += 180.0
    return folded


def eye_axis_angle(landmarks) -> float:
    """
    Angle in degrees of the segment from the right-eye centroid to the left-eye centroid,
    measured from the image horizontal. Positive is counter-clockwise in image
    coordinates, which appears clockwise on screen because y points down.
    """
    points = _as_points(landmarks)
    right, left = _centroid(points, "right_eye"), _centroid(points, "left_eye")
    dx, dy = left - right
    if dx == 0.0 and dy == 0.0:
        logger.warning("Eye centroids coincide; using theta = 0")
        return 0.0
    return normalize_angle(math.degrees(math.atan2(dy, dx)))


def fit_expanded_box(
    points, theta: float, horizontal_expansion: float = 0.10, vertical_expansion: float = 0.25
) -> RotatedBox:
    """
    Minimal box of the points in the frame de-rotated by theta, grown about its center by
    the expansion fractions, then returned in image coordinates with theta attached.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 2:
        raise DegenerateRegionError("degenerate ocular region: fewer than two points")

    origin = points.mean(axis=0)
    upright = _rotate(points, -theta, origin)
    low, high = upright.min(axis=0), upright.max(axis=0)
    raw_width, raw_height = (high - low).tolist()
    if raw_width <= 0 or raw_height <= 0:
        raise DegenerateRegionError(f"degenerate ocular region: {raw_width} x {raw_height}")

    center = _rotate(((low + high) / 2.0)[None, :], theta, origin)[0]
    return RotatedBox(
        center=(float(center[0]), float(center[1])),
        width=raw_width * (1.0 + horizontal_expansion),
        height=raw_height * (1.0 + vertical_expansion),
        theta=normalize_angle(theta),
        raw_width=raw_width,
        raw_height=raw_height,
    )


def eligibility(width: float, height: float, label: Label, label_range: Tuple[float, float] = (-1.0, 1.0)) -> Verdict:
    """Accept iff both sides are positive, the slot is not portrait and the label is in range."""
    if not (width > 0 and height > 0):
        return Verdict(False, NON_POSITIVE_SIZE)
    if height > width:
        return Verdict(False, PORTRAIT_ASPECT)
    low, high = label_range
    if not all(low <= value <= high for value in label):
        return Verdict(False, LABEL_OUT_OF_RANGE)
    return ACCEPT


def derotate_image(image: np.ndarray, center: Tuple[float, float], theta: float) -> np.ndarray:
    """Rotate the image by -theta about center (bilinear, black outside)."""
    if theta == 0.0:
        return image
    # cv2 rotates counter-clockwise on screen for positive angles, undoing our +theta
    matrix = cv2.getRotationMatrix2D((float(center[0]), float(center[1])), float(theta), 1.0)
    height, width = image.shape[:2]
    return cv2.warpAffine(
        image, matrix, (width, height), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0),
    )


def extract_eye_slot(
    image: np.ndarray,
    landmarks,
    label: Label,
    config: Optional[EyeSlotConfig] = None,
    record_id: str = "",
) -> Union[EyeSlot, Rejection]:
    """
    Crop the eye slot: fit the expanded box, rotate the image about the box center so the
    box becomes axis-aligned, crop (clamped to the image) and apply the eligibility rules.
    """
    config = config or EyeSlotConfig()
    try:
        box = fit_expanded_box(
            ocular_points(landmarks), eye_axis_angle(landmarks),
            config.horizontal_expansion, config.vertical_expansion,
        )
    except DegenerateRegionError as e:
        return Rejection(reason=NON_POSITIVE_SIZE, record_id=record_id, detail=str(e))

    image_height, image_width = image.shape[:2]
    cx, cy = box.center
    x0, x1 = int(round(cx - box.width / 2.0)), int(round(cx + box.width / 2.0))
    y0, y1 = int(round(cy - box.height / 2.0)), int(round(cy + box.height / 2.0))
    cx0, cx1 = max(x0, 0), min(x1, image_width)
    cy0, cy1 = max(y0, 0), min(y1, image_height)

    if cx1 <= cx0 or cy1 <= cy0:
        return Rejection(reason=EMPTY_CROP, record_id=record_id, detail=f"box {x0}:{x1}, {y0}:{y1}")

    full_area = max((x1 - x0) * (y1 - y0), 1)
    clipped = 1.0 - ((cx1 - cx0) * (cy1 - cy0)) / full_area
    if clipped > config.max_clipped_fraction:
        return Rejection(reason=CLIPPED_CROP, record_id=record_id, detail=f"{clipped:.0%} outside image")

    upright = derotate_image(image, box.center, box.theta)
    crop = np.ascontiguousarray(upright[cy0:cy1, cx0:cx1])

    verdict = eligibility(crop.shape[1], crop.shape[0], label, config.label_range)
    if not verdict.accepted:
        return Rejection(reason=verdict.reason, record_id=record_id, detail=f"{crop.shape[1]}x{crop.shape[0]}")
    return EyeSlot(image=crop, valence=float(label[0]), arousal=float(label[1]), record_id=record_id, box=box)


def draw_box_overlay(image: np.ndarray, box: RotatedBox) -> np.ndarray:
    """The minimal box (yellow), the expanded box (green) and the eye axis (red)."""
    canvas = np.ascontiguousarray(image.copy())
    raw = np.round(box.raw_box().corners()).astype(np.int32)
    expanded = np.round(box.corners()).astype(np.int32)
    cv2.polylines(canvas, [raw], True, (255, 255, 0), 1, cv2.LINE_AA)
    cv2.polylines(canvas, [expanded], True, (0, 255, 0), 2, cv2.LINE_AA)
    axis = _rotate(
        np.array([[box.center[0] - box.width / 2.0, box.center[1]], [box.center[0] + box.width / 2.0, box.center[1]]]),
        box.theta, np.asarray(box.center),
    )
    start, end = np.round(axis).astype(int)
    cv2.line(canvas, tuple(int(v) for v in start), tuple(int(v) for v in end), (255, 0, 0), 1, cv2.LINE_AA)
    cv2.putText(
        canvas, f"theta={box.theta:.1f}", (5, 15), cv2.FONT_HERSHEY_SIMPLEX, 0.4, (255, 255, 255), 1, cv2.LINE_AA
    )
    return canvas


def read_image(path: Union[str, Path]) -> np.ndarray:
    """RGB, 8-bit, height x width x 3"""
    with Image.open(path) as handle:
        return np.asarray(handle.convert("RGB"), dtype=np.uint8).copy()


def write_image(image: np.ndarray, path: Union[str, Path]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")
