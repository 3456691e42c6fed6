"""
Attention Maps
Input-gradient saliency of the valence/arousal outputs, rendered as heatmap overlays
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import cv2
import numpy as np

from errors import ShapeMismatchError
from models.network import Network
from preprocessing.eyeslot import write_image

logger = logging.getLogger(__name__)

Direction = Literal["increase", "decrease", "magnitude", "maintain"]
DIRECTIONS = ("increase", "decrease", "magnitude", "maintain")
OUTPUT_NAMES = ("valence", "arousal")
TRIPTYCH = ("increase", "decrease", "maintain")
MAX_ALPHA = 0.6


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel influence, height x width, normalized to [0, 1]; raw keeps the unnormalized map."""

    values: np.ndarray = field(repr=False)
    raw: np.ndarray = field(repr=False)
    output_index: int
    direction: str

    @property
    def target(self) -> str:
        return OUTPUT_NAMES[self.output_index]


def input_gradient(network: Network, image: np.ndarray, output_index: int, sign: float = 1.0) -> np.ndarray:
    """d(sign * output[output_index]) / d(input) for one image, batch norm in inference mode."""
    if output_index not in (0, 1):
        raise ValueError(f"output_index must be 0 (valence) or 1 (arousal), got {output_index}")
    x = np.asarray(image)[None] if np.asarray(image).ndim == 3 else np.asarray(image)
    if x.shape[0] != 1:
        raise ShapeMismatchError("saliency takes a single input", (1,) + network.input_shape, x.shape)
    out = network.forward(x, training=False)
    seed = np.zeros_like(out)
    seed[0, output_index] = sign
    grad = network.backward(seed)[0]
    network.clear_caches()
    return grad


def normalize_map(values: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]. An identically zero map stays zero; a constant positive map becomes ones."""
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high == low:
        return np.zeros_like(values) if high == 0.0 else np.ones_like(values)
    return (values - low) / (high - low)


def saliency(network: Network, image: np.ndarray, output_index: int, direction: Direction = "magnitude") -> SaliencyMap:
    """
    One forward and one backward pass, reduced to one value per pixel by a maximum over
    channels:

    - increase: max over channels of max(+gradient, 0), pixels that raise the output
    - decrease: max over channels of max(-gradient, 0), pixels that lower it
    - magnitude: max over channels of |gradient|
    - maintain: 1 - normalized magnitude, pixels whose changes move the output least

    increase and decrease therefore keep signed evidence and are not |gradient| maps.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown saliency direction {direction!r}")
    sign = -1.0 if direction == "decrease" else 1.0
    grad = input_gradient(network, image, output_index, sign).astype(np.float64)

    if direction in ("increase", "decrease"):
        raw = np.maximum(grad, 0.0).max(axis=-1)
        values = normalize_map(raw)
    else:
        raw = np.abs(grad).max(axis=-1)
        values = normalize_map(raw)
        if direction == "maintain":
            values = 1.0 - values
    return SaliencyMap(values=values, raw=raw, output_index=output_index, direction=direction)


def _to_uint8(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint8:
        return image
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def heatmap_overlay(image: np.ndarray, values: np.ndarray, path: Optional[Union[str, Path]] = None) -> np.ndarray:
    """
    Jet-colored map blended over the grayscale input with per-pixel alpha proportional to
    the map value; a zero map returns the grayscale image unchanged.
    """
    rgb = _to_uint8(image)
    values = np.asarray(values, dtype=np.float64)
    if rgb.shape[:2] != values.shape:
        raise ShapeMismatchError("overlay map must match the image", rgb.shape[:2], values.shape)

    gray = cv2.cvtColor(cv2.cvtColor(rgb, cv2.COLOR_RGB2GRAY), cv2.COLOR_GRAY2RGB).astype(np.float64)
    colored = cv2.cvtColor(
        cv2.applyColorMap(np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8), cv2.COLORMAP_JET),
        cv2.COLOR_BGR2RGB,
    ).astype(np.float64)
    alpha = (MAX_ALPHA * np.clip(values, 0.0, 1.0))[..., None]
    blended = np.clip(np.rint((1.0 - alpha) * gray + alpha * colored), 0, 255).astype(np.uint8)
    if path is not None:
        write_image(blended, path)
    return blended


def _caption(panel: np.ndarray, text: str) -> np.ndarray:
    panel = panel.copy()
    cv2.putText(panel, text, (4, 12), cv2.FONT_HERSHEY_SIMPLEX, 0.35, (255, 255, 255), 1, cv2.LINE_AA)
    return panel


def attention_triptych(
    network: Network,
    image: np.ndarray,
    outputs: Sequence[int] = (0, 1),
    path: Optional[Union[str, Path]] = None,
    gap: int = 4,
) -> np.ndarray:
    """One row per output: increase, decrease and maintain overlays side by side."""
    rows = []
    for index in outputs:
        panels = []
        for direction in TRIPTYCH:
            overlay = heatmap_overlay(image, saliency(network, image, index, direction).values)
            panels.append(_caption(overlay, f"{OUTPUT_NAMES[index]} {direction}"))
        spacer = np.full((panels[0].shape[0], gap, 3), 255, dtype=np.uint8)
        rows.append(np.hstack([panels[0], spacer, panels[1], spacer, panels[2]]))
    divider = np.full((gap, rows[0].shape[1], 3), 255, dtype=np.uint8)
    grid = rows[0]
    for row in rows[1:]:
        grid = np.vstack([grid, divider, row])
    if path is not None:
        write_image(grid, path)
        logger.info(f"Wrote attention triptych {path}")
    return grid
