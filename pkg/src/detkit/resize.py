"""Shared (C, H, W) array resampling: bilinear and nearest-neighbor.

Source positions follow half-pixel-center semantics: output cell ``i``
samples the source at ``(i + 0.5) * scale - 0.5``, with neighbor indices
clamped at the borders so constant inputs stay constant.
"""

from __future__ import annotations

import numpy as np


def _source_coords(out_size: int, in_size: int) -> np.ndarray:
    scale = in_size / out_size
    return (np.arange(out_size) + 0.5) * scale - 0.5


def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a (C, H, W) array to (C, out_h, out_w)."""
    arr = np.asarray(arr, dtype=float)
    c, h, w = arr.shape
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {(out_h, out_w)}")
    if (out_h, out_w) == (h, w):
        return arr.copy()

    ys = _source_coords(out_h, h)
    xs = _source_coords(out_w, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)

    top = arr[:, y0c, :]
    bot = arr[:, y1c, :]
    wy = fy[None, :, None]
    rows = top * (1.0 - wy) + bot * wy
    wx = fx[None, None, :]
    return rows[:, :, x0c] * (1.0 - wx) + rows[:, :, x1c] * wx


def nearest_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resample of a (C, H, W) array."""
    arr = np.asarray(arr, dtype=float)
    c, h, w = arr.shape
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {(out_h, out_w)}")
    if (out_h, out_w) == (h, w):
        return arr.copy()
    ys = np.clip(np.floor(_source_coords(out_h, h) + 0.5).astype(int), 0, h - 1)
    xs = np.clip(np.floor(_source_coords(out_w, w) + 0.5).astype(int), 0, w - 1)
    return arr[:, ys, :][:, :, xs]


def resize_feature(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a feature map: bilinear when growing, nearest when shrinking."""
    if out_h >= arr.shape[1]:
        return bilinear_resize(arr, out_h, out_w)
    return nearest_resize(arr, out_h, out_w)
