"""Forward/backward primitives for the small CNN, hand-written per layer.

Tensors are float64 numpy arrays in (batch, channel, height, width)
layout.  Every operation is a pure function; backward passes are exact
gradients of the scalar <grad_out, forward(...)> and are checked against
central finite differences in the test suite.

Conventions that matter for gradient checking:
  - convolution is cross-correlation (no kernel flip)
  - relu subgradient at exactly 0 is 0
  - maxpool ties break to the first element in row-major window order
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def conv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlate (N,C,H,W) input with (F,C,kH,kW) kernels."""
    x = _as_f64(x)
    kernels = _as_f64(kernels)
    bias = _as_f64(bias)
    n, c, h, w = x.shape
    f, ck, kh, kw = kernels.shape
    if ck != c:
        raise ShapeError(f"kernel channels {kernels.shape} do not match input {x.shape}")
    if bias.shape != (f,):
        raise ShapeError(f"bias shape {bias.shape} does not match {f} kernels")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"kernel {kernels.shape} too large for input {x.shape} "
                         f"with padding {padding}")
    cols = _im2col(x, kh, kw, stride, padding, oh, ow)  # (N*oh*ow, C*kh*kw)
    out = cols @ kernels.reshape(f, -1).T + bias
    return np.ascontiguousarray(out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int,
            oh: int, ow: int) -> np.ndarray:
    """Extract (N*oh*ow, C*kh*kw) patch matrix from a padded (N,C,H,W) input."""
    n, c = x.shape[:2]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]  # (N, C, oh, ow, kh, kw)
    return view.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, kernels: np.ndarray,
                    stride: int = 1, padding: int = 0):
    """Gradients of <grad_out, conv2d(x, kernels, bias)> w.r.t. each argument.

    Returns (grad_input, grad_kernels, grad_bias).
    """
    grad_out = _as_f64(grad_out)
    x = _as_f64(x)
    kernels = _as_f64(kernels)
    n, c, h, w = x.shape
    f, _, kh, kw = kernels.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if grad_out.shape != (n, f, oh, ow):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match "
                         f"forward output {(n, f, oh, ow)}")
    cols = _im2col(x, kh, kw, stride, padding, oh, ow)
    gmat = grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
    gk = (gmat.T @ cols).reshape(kernels.shape)
    gcols = (gmat @ kernels.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
    gcols = gcols.transpose(0, 3, 1, 2, 4, 5)  # (N, C, oh, ow, kh, kw)
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += gcols[..., i, j]
    gx = gxp[:, :, padding:padding + h, padding:padding + w]
    gb = grad_out.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gx), gk, gb


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(_as_f64(x), 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    # subgradient at 0 defined as 0
    return np.where(_as_f64(x) > 0.0, _as_f64(grad_out), 0.0)


def maxpool2(x: np.ndarray):
    """2x2 stride-2 max pool; returns (output, argmax indices 0..3).

    Index is row-major within the window; ties take the first occurrence.
    """
    x = _as_f64(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {x.shape}")
    windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = windows.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(grad_out: np.ndarray, idx: np.ndarray) -> np.ndarray:
    grad_out = _as_f64(grad_out)
    if grad_out.shape != idx.shape:
        raise ShapeError(f"grad_out {grad_out.shape} does not match indices {idx.shape}")
    n, c, oh, ow = grad_out.shape
    flat = np.zeros((n, c, oh, ow, 4))
    np.put_along_axis(flat, idx[..., None], grad_out[..., None], axis=-1)
    return np.ascontiguousarray(
        flat.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * oh, 2 * ow))


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """(N,C,H,W) -> (N,C) per-channel spatial mean."""
    return _as_f64(x).mean(axis=(2, 3))


def global_avg_pool_backward(grad_out: np.ndarray, shape) -> np.ndarray:
    n, c, h, w = shape
    grad_out = _as_f64(grad_out)
    if grad_out.shape != (n, c):
        raise ShapeError(f"grad_out {grad_out.shape} does not match channels {(n, c)}")
    return np.broadcast_to(grad_out[:, :, None, None] / (h * w), shape).copy()


def affine(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """(N,K) @ (M,K)^T + (M,)."""
    x, weights, bias = _as_f64(x), _as_f64(weights), _as_f64(bias)
    if x.shape[-1] != weights.shape[1] or weights.shape[0] != bias.shape[0]:
        raise ShapeError(f"affine shapes {x.shape} x {weights.shape} + {bias.shape}")
    return x @ weights.T + bias


def affine_backward(grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray):
    grad_out, x, weights = _as_f64(grad_out), _as_f64(x), _as_f64(weights)
    gx = grad_out @ weights
    gw = grad_out.T @ x
    gb = grad_out.sum(axis=0)
    return gx, gw, gb


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = _as_f64(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


PROB_FLOOR = 1e-12


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative natural log of the label probability, floored at 1e-12."""
    return float(-np.log(max(float(np.asarray(probs).reshape(-1)[label]), PROB_FLOOR)))


def softmax_cross_entropy_backward(probs: np.ndarray, label: int) -> np.ndarray:
    """Gradient of cross_entropy(softmax(logits), label) w.r.t. logits."""
    g = _as_f64(probs).copy().reshape(-1)
    g[label] -= 1.0
    return g
