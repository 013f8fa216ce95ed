"""Class activation mapping: Grad-CAM, HiResCAM, Grad-CAM++, and their ensemble.

All four methods consume the same pair (A, G): the target-layer feature
maps and the gradient of the target-class logit with respect to them,
both shaped (K, h, w).  The ensemble pipeline is fixed as

    {grad_cam, hires_cam, grad_cam_pp}
      -> bilinear upsample to input resolution
      -> per-map min-max normalization to [0, 1]
      -> pixel-wise average
      -> 90th-percentile threshold (top 10% of values kept)

Every function here is pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ops import ShapeError

RES_TARGET = "target"
RES_INPUT = "input"
NORM_RAW = "raw"
NORM_UNIT = "unit"
NORM_THRESHOLDED = "thresholded"

DENOM_GUARD = 1e-12
ENSEMBLE_FRACTION = 0.1


@dataclass(frozen=True)
class Cam:
    """Single-channel 2-D heatmap plus resolution/normalization tags."""
    values: np.ndarray
    resolution: str = RES_TARGET
    normalization: str = NORM_RAW

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ShapeError(f"Cam values must be a non-empty 2-D map, got shape {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class RetentionMask:
    """Binary keep-map at input resolution with its retained-pixel count."""
    mask: np.ndarray
    retained_count: int

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", m)
        if int(m.sum()) != self.retained_count:
            raise ValueError(
                f"retained_count {self.retained_count} does not match set bits {int(m.sum())}")


def _check_pair(a: np.ndarray, g: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if a.ndim != 3 or a.shape != g.shape:
        raise ShapeError(f"activations {a.shape} and gradients {g.shape} must share (K, h, w)")
    return a, g


def grad_cam(a: np.ndarray, g: np.ndarray) -> Cam:
    """Channel weights = spatial mean of gradients; relu of weighted sum."""
    a, g = _check_pair(a, g)
    weights = g.mean(axis=(1, 2))
    return Cam(np.maximum(np.tensordot(weights, a, axes=1), 0.0))


def grad_cam_channel_weights(g: np.ndarray) -> np.ndarray:
    """The per-channel Grad-CAM weights w_k = (1/Z) sum_ij G_k[i,j]."""
    return np.asarray(g, dtype=np.float64).mean(axis=(1, 2))


def hires_cam(a: np.ndarray, g: np.ndarray) -> Cam:
    """Element-wise product of gradients and feature maps, summed over channels.

    No trailing relu; the raw map may be negative.
    """
    a, g = _check_pair(a, g)
    return Cam((a * g).sum(axis=0))


def grad_cam_pp(a: np.ndarray, g: np.ndarray) -> Cam:
    """Grad-CAM++ with the smooth-score closed form for the alpha coefficients.

    alpha_k[i,j] = G^2 / (2 G^2 + sum_ab(A_k) * G^3), set to 0 where the
    denominator magnitude is below 1e-12.
    """
    a, g = _check_pair(a, g)
    g2 = g * g
    denom = 2.0 * g2 + a.sum(axis=(1, 2))[:, None, None] * g2 * g
    alpha = np.where(np.abs(denom) < DENOM_GUARD, 0.0, g2 / np.where(denom == 0.0, 1.0, denom))
    weights = (alpha * np.maximum(g, 0.0)).sum(axis=(1, 2))
    return Cam(np.maximum(np.tensordot(weights, a, axes=1), 0.0))


def upsample_bilinear(cam: Cam, out_h: int, out_w: int) -> Cam:
    """Corner-aligned bilinear resize; output corners equal input corners."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output dims must be >= 1, got {(out_h, out_w)}")
    v = cam.values
    in_h, in_w = v.shape
    ys = np.linspace(0.0, in_h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, in_w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.minimum(ys.astype(int), in_h - 1)
    x0 = np.minimum(xs.astype(int), in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    out = (v[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
           + v[np.ix_(y0, x1)] * (1 - fy) * fx
           + v[np.ix_(y1, x0)] * fy * (1 - fx)
           + v[np.ix_(y1, x1)] * fy * fx)
    return Cam(out, resolution=RES_INPUT, normalization=cam.normalization)


def normalize_unit(cam: Cam) -> Cam:
    """Min-max rescale to [0, 1]; a near-constant map collapses to zeros."""
    v = cam.values
    span = v.max() - v.min()
    if span < 1e-12:
        out = np.zeros_like(v)
    else:
        out = (v - v.min()) / span
    return Cam(out, resolution=cam.resolution, normalization=NORM_UNIT)


def average_cams(c1: Cam, c2: Cam, c3: Cam) -> Cam:
    """Pixel-wise mean of three unit-normalized CAMs at one resolution."""
    parts = (c1, c2, c3)
    for c in parts:
        if c.normalization != NORM_UNIT:
            raise ValueError(f"average_cams needs unit-normalized inputs, got {c.normalization!r}")
    if len({c.resolution for c in parts}) != 1 or len({c.values.shape for c in parts}) != 1:
        raise ShapeError("average_cams inputs must share resolution and shape")
    return Cam((c1.values + c2.values + c3.values) / 3.0,
               resolution=c1.resolution, normalization=NORM_UNIT)


def threshold_value(values: np.ndarray, fraction: float) -> float:
    """The m-th largest value, m = floor(fraction * pixel count)."""
    m = math.floor(fraction * values.size)
    return float(np.sort(values, axis=None)[-m])


def apply_threshold(cam: Cam) -> Cam:
    """Keep values >= the 90th-percentile cut, zero the rest.

    The cut is the m-th largest value with m = floor(0.1 * P); with all
    values distinct exactly m pixels survive, ties at the cut all survive.
    """
    v = cam.values
    if v.size < 10:
        raise ValueError(f"threshold undefined for maps with fewer than 10 pixels (got {v.size})")
    t = threshold_value(v, ENSEMBLE_FRACTION)
    return Cam(np.where(v >= t, v, 0.0),
               resolution=cam.resolution, normalization=NORM_THRESHOLDED)


def ensemble_cam(a: np.ndarray, g: np.ndarray, input_h: int, input_w: int):
    """Full ensemble pipeline; returns (thresholded ensemble, three unit parts)."""
    parts = tuple(
        normalize_unit(upsample_bilinear(method(a, g), input_h, input_w))
        for method in (grad_cam, hires_cam, grad_cam_pp))
    return apply_threshold(average_cams(*parts)), parts


def top_fraction_mask(cam: Cam, fraction: float = 0.1) -> RetentionMask:
    """Mask of pixels holding the top `fraction` of CAM values."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if cam.resolution != RES_INPUT:
        raise ValueError("top_fraction_mask expects a CAM at input resolution")
    v = cam.values
    m = math.floor(fraction * v.size)
    if m < 1:
        raise ValueError(f"fraction {fraction} retains no pixels on a {v.shape} map")
    t = threshold_value(v, fraction)
    mask = v >= t
    return RetentionMask(mask, int(mask.sum()))


def support_mask(cam: Cam) -> RetentionMask:
    """Retention mask over the nonzero support of a thresholded CAM."""
    mask = cam.values != 0.0
    return RetentionMask(mask, int(mask.sum()))
