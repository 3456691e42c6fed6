"""
Eye Slot Augmentation
Randomized training transforms, letterboxing and pixel normalization
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import cv2
import numpy as np

from preprocessing.eyeslot import EyeSlot
from schemas.config import AugmentConfig
from seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

# (width, height) of the network input frame
DEFAULT_TARGET = (512, 170)


@dataclass(frozen=True)
class TransformParams:
    """
    One draw of the augmentation parameters. Shifts are fractions of the slot size;
    pixel_shift() converts them once the slot dimensions are known.
    """

    brightness: float = 1.0
    rotation: float = 0.0
    width_shift: float = 0.0
    height_shift: float = 0.0
    shear: float = 0.0
    hflip: bool = False

    def pixel_shift(self, width: int, height: int) -> Tuple[float, float]:
        return (self.width_shift * width, self.height_shift * height)

    @property
    def is_identity(self) -> bool:
        return (
            self.brightness == 1.0 and self.rotation == 0.0 and self.width_shift == 0.0
            and self.height_shift == 0.0 and self.shear == 0.0 and not self.hflip
        )


@dataclass(frozen=True)
class NormalizedInput:
    """A letterboxed network input in [0, 1], height x width x 3, with its untouched label"""

    tensor: np.ndarray = field(repr=False)
    label: Tuple[float, float] = (0.0, 0.0)


def augment_seed(base_seed: int, epoch: int, index: int) -> int:
    """Per-sample seed, independent of worker scheduling."""
    return derive_seed(base_seed, "augment", epoch, index)


def sample_transform(config: AugmentConfig, rng_seed: int) -> TransformParams:
    """
    Magnitudes uniform within each range, independent random signs for rotation, shifts
    and shear, horizontal flip with probability 0.5. Draw order is fixed.
    """
    rng = make_rng(rng_seed)

    def signed(bounds: Tuple[float, float]) -> float:
        magnitude = float(rng.uniform(*bounds))
        return magnitude if rng.random() < 0.5 else -magnitude

    brightness = float(rng.uniform(*config.brightness_range))
    rotation = signed(config.rotation_range)
    width_shift = signed(config.width_shift_range)
    height_shift = signed(config.height_shift_range)
    shear = signed(config.shear_range)
    hflip = bool(rng.random() < 0.5) if config.hflip_enabled else False
    return TransformParams(brightness, rotation, width_shift, height_shift, shear, hflip)


def _as_unit_float(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint8:
        return image.astype(np.float32) / 255.0
    return image.astype(np.float32)


def _restore_dtype(unit: np.ndarray, like: np.ndarray) -> np.ndarray:
    if like.dtype == np.uint8:
        return np.clip(np.rint(unit * 255.0), 0, 255).astype(np.uint8)
    return unit.astype(like.dtype)


def apply_brightness(image: np.ndarray, factor: float) -> np.ndarray:
    """Scale the HLS lightness channel by factor, clamped to its valid range."""
    if factor == 1.0:
        return image.copy()
    hls = cv2.cvtColor(_as_unit_float(image), cv2.COLOR_RGB2HLS)
    hls[..., 1] = np.clip(hls[..., 1] * factor, 0.0, 1.0)
    return _restore_dtype(cv2.cvtColor(hls, cv2.COLOR_HLS2RGB), image)


def affine_matrix(width: int, height: int, rotation: float, dx: float, dy: float, shear: float) -> np.ndarray:
    """
    2 x 3 forward map: rotation about the image center, then horizontal shear about the
    center, then translation. Positive rotation is counter-clockwise on screen.
    """
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    rad = math.radians(rotation)
    c, s = math.cos(rad), math.sin(rad)
    rotate = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    shear_x = np.array([[1.0, math.tan(shear), 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    to_center = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy], [0.0, 0.0, 1.0]])
    from_center = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    translate = np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]])
    return (translate @ to_center @ shear_x @ rotate @ from_center)[:2]


def apply_affine(
    image: np.ndarray, rotation: float = 0.0, dx: float = 0.0, dy: float = 0.0, shear: float = 0.0
) -> np.ndarray:
    """One composed warp with bilinear sampling and black fill."""
    if rotation == 0.0 and dx == 0.0 and dy == 0.0 and shear == 0.0:
        return image.copy()
    height, width = image.shape[:2]
    matrix = affine_matrix(width, height, rotation, dx, dy, shear)
    source = image.astype(np.float32) if image.dtype == np.float64 else image
    warped = cv2.warpAffine(
        source, matrix, (width, height), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0,
    )
    if warped.ndim < image.ndim:
        warped = warped[..., None]
    return warped.astype(image.dtype, copy=False)


def apply_hflip(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, ::-1])


def apply_transform(image: np.ndarray, params: TransformParams) -> np.ndarray:
    """brightness, then the affine warp, then the optional flip"""
    out = apply_brightness(image, params.brightness)
    dx, dy = params.pixel_shift(image.shape[1], image.shape[0])
    out = apply_affine(out, params.rotation, dx, dy, params.shear)
    if params.hflip:
        out = apply_hflip(out)
    return out


def letterbox_geometry(width: int, height: int, target_w: int, target_h: int) -> Tuple[float, int, int, int, int]:
    """(scale, content width, content height, left pad, top pad) for an aspect-preserving fit."""
    if width <= 0 or height <= 0:
        raise ValueError(f"cannot letterbox a {width}x{height} image")
    if target_w <= 0 or target_h <= 0:
        raise ValueError(f"letterbox target must be positive, got {target_w}x{target_h}")
    scale = min(target_w / width, target_h / height)
    content_w = min(max(int(round(width * scale)), 1), target_w)
    content_h = min(max(int(round(height * scale)), 1), target_h)
    return scale, content_w, content_h, (target_w - content_w) // 2, (target_h - content_h) // 2


def letterbox(image: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Uniform bilinear resize into the target frame, centered on black padding."""
    height, width = image.shape[:2]
    _, content_w, content_h, left, top = letterbox_geometry(width, height, target_w, target_h)

    if (content_w, content_h) == (width, height):
        content = image
    else:
        content = cv2.resize(image, (content_w, content_h), interpolation=cv2.INTER_LINEAR)
        if content.ndim < image.ndim:
            content = content[..., None]

    canvas = np.zeros((target_h, target_w) + image.shape[2:], dtype=image.dtype)
    canvas[top:top + content_h, left:left + content_w] = content
    return canvas


def normalize_pixels(image: np.ndarray, dtype: str = "float32") -> np.ndarray:
    """8-bit values to reals in [0, 1]"""
    if image.dtype != np.uint8:
        raise ValueError(f"expected an 8-bit image, got {image.dtype}")
    return (image.astype(np.float64) / 255.0).astype(dtype)


def prepare_input(
    image: np.ndarray, target: Tuple[int, int] = DEFAULT_TARGET, dtype: str = "float32"
) -> np.ndarray:
    """Validation and test inputs: letterbox and normalize, nothing random."""
    return normalize_pixels(letterbox(image, *target), dtype)


def augment_pipeline(
    slot: EyeSlot,
    config: AugmentConfig,
    rng_seed: int,
    target: Tuple[int, int] = DEFAULT_TARGET,
    dtype: str = "float32",
) -> NormalizedInput:
    """sample_transform, brightness, affine, flip, letterbox, normalize. The label is carried as is."""
    params = sample_transform(config, rng_seed)
    image = apply_transform(slot.image, params)
    return NormalizedInput(tensor=prepare_input(image, target, dtype), label=slot.label)


def preview_panel(
    slot: EyeSlot,
    config: AugmentConfig,
    seeds: Sequence[int],
    target: Tuple[int, int] = DEFAULT_TARGET,
    gap: int = 4,
) -> np.ndarray:
    """The plain letterboxed slot on top, one augmented variant per seed below it."""
    rows = [letterbox(slot.image, *target)]
    for seed in seeds:
        rows.append(letterbox(apply_transform(slot.image, sample_transform(config, seed)), *target))

    spacer: Optional[np.ndarray] = np.full((gap, target[0], 3), 255, dtype=np.uint8) if gap else None
    stacked = []
    for i, row in enumerate(rows):
        if i and spacer is not None:
            stacked.append(spacer)
        stacked.append(row)
    return np.vstack(stacked)
