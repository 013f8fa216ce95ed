"""Heatmap colorization and overlay rendering.

The colormap is a documented piecewise-linear jet-style ramp frozen by
golden-file tests:

    0.00 -> blue   (0, 0, 255)
    0.35 -> green  (0, 255, 0)
    0.65 -> yellow (255, 255, 0)
    1.00 -> red    (255, 0, 0)

Warm colors mark relevant regions, blue marks non-relevant ones.
"""

from __future__ import annotations

import numpy as np

from .cam import Cam, NORM_THRESHOLDED, NORM_UNIT
from .ops import ShapeError

RAMP_POSITIONS = np.array([0.0, 0.35, 0.65, 1.0])
RAMP_COLORS = np.array([
    [0.0, 0.0, 255.0],
    [0.0, 255.0, 0.0],
    [255.0, 255.0, 0.0],
    [255.0, 0.0, 0.0],
])

SEPARATOR_PX = 2


def colormap(cam: Cam) -> np.ndarray:
    """Map a unit-normalized CAM to an (H, W, 3) uint8 image."""
    v = cam.values
    if v.min() < 0.0 or v.max() > 1.0:
        raise ValueError(f"colormap input must lie in [0, 1], got [{v.min()}, {v.max()}]")
    out = np.stack([np.interp(v, RAMP_POSITIONS, RAMP_COLORS[:, ch]) for ch in range(3)],
                   axis=-1)
    return np.round(out).astype(np.uint8)


def _image_chw(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 4:
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"expected a (3, H, W) image, got {arr.shape}")
    return arr


def overlay(image: np.ndarray, cam: Cam, alpha: float = 0.5) -> np.ndarray:
    """Blend a colorized CAM onto an image; returns (3, H, W) floats in [0, 1].

    For thresholded CAMs the zeroed pixels stay fully transparent so the
    retained support reads as discrete islands over the untouched image.
    """
    img = _image_chw(image)
    if cam.values.shape != img.shape[1:]:
        raise ShapeError(f"cam {cam.values.shape} does not match image {img.shape[1:]}")
    if cam.normalization not in (NORM_UNIT, NORM_THRESHOLDED):
        raise ValueError("overlay expects a unit-normalized or thresholded CAM")
    heat = colormap(Cam(cam.values, cam.resolution, NORM_UNIT)).astype(np.float64) / 255.0
    heat = heat.transpose(2, 0, 1)
    blended = (1.0 - alpha) * img + alpha * heat
    if cam.normalization == NORM_THRESHOLDED:
        transparent = cam.values == 0.0
        blended = np.where(transparent[None], img, blended)
    return np.clip(blended, 0.0, 1.0)


def comparison_panel(image: np.ndarray, cams: list[tuple[str, Cam]],
                     alpha: float = 0.5) -> np.ndarray:
    """Horizontal strip: original image, then one overlay per named CAM.

    Panels are separated by 2-px white columns; method order is carried
    by the caller in the output filename, not rasterized.
    """
    if not cams:
        raise ValueError("comparison_panel needs at least one CAM")
    img = _image_chw(image)
    panels = [img] + [overlay(img, c, alpha) for _name, c in cams]
    sep = np.ones((3, img.shape[1], SEPARATOR_PX))
    pieces = []
    for i, panel in enumerate(panels):
        if i:
            pieces.append(sep)
        pieces.append(panel)
    return np.concatenate(pieces, axis=2)
