"""Feature pyramid bookkeeping: per-level anchor generation, area-based
level assignment, and the collapse-to-one-level fusion neck with its
residual redistribution back onto the pyramid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box, area
from .resize import resize_feature

# Canonical box side (in pixels) that maps to the stride-16 level.
LEVEL_CANONICAL_SIDE = 224.0
LEVEL_CANONICAL_STRIDE = 16


@dataclass(frozen=True)
class PyramidSpec:
    """Pyramid layout: named levels with doubling strides, plus the anchor
    scales and width/height aspect ratios tiled at every level."""

    levels: tuple[tuple[str, int], ...] = (
        ("C2", 4), ("C3", 8), ("C4", 16), ("C5", 32),
    )
    scales: tuple[float, ...] = (8.0,)
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self):
        if len(self.levels) == 0:
            raise ValueError("pyramid needs at least one level")
        strides = [s for _, s in self.levels]
        if any(s < 1 for s in strides):
            raise ValueError(f"strides must be positive, got {strides}")
        for lo, hi in zip(strides, strides[1:]):
            if hi != 2 * lo:
                raise ValueError(
                    f"strides must double level to level, got {strides}"
                )
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError(f"scales must be positive, got {self.scales}")
        if not self.ratios or any(r <= 0 for r in self.ratios):
            raise ValueError(f"ratios must be positive, got {self.ratios}")

    @property
    def strides(self) -> tuple[int, ...]:
        return tuple(s for _, s in self.levels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.levels)

    @classmethod
    def from_strides(cls, strides, scales=(8.0,), ratios=(0.5, 1.0, 2.0)):
        levels = tuple((f"s{s}", int(s)) for s in strides)
        return cls(levels=levels, scales=tuple(scales), ratios=tuple(ratios))


@dataclass
class FeatureMap:
    """A (C, H, W) feature array with the stride it was computed at."""

    tensor: np.ndarray
    stride: int

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=float)
        if self.tensor.ndim != 3:
            raise ValueError(
                f"feature map must be (C, H, W), got shape {self.tensor.shape}"
            )
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")


def gen_anchors(spec: PyramidSpec, image_w: int,
                image_h: int) -> list[list[Box]]:
    """Tile anchors over every pyramid level.

    Each level's grid has ``ceil(image / stride)`` cells per axis; every
    cell center ``((j + 0.5) * stride, (i + 0.5) * stride)`` carries one
    anchor per (ratio, scale) pair with width ``scale * stride * sqrt(r)``
    and height ``scale * stride / sqrt(r)``. Ordering is deterministic:
    cells row-major, then ratios, then scales.

    Returns:
        One anchor list per level, parallel to ``spec.levels``.
    """
    if image_w < 1 or image_h < 1:
        raise ValueError(f"image size must be positive, got {(image_w, image_h)}")
    out = []
    for _, stride in spec.levels:
        nx = math.ceil(image_w / stride)
        ny = math.ceil(image_h / stride)
        anchors = []
        for i in range(ny):
            cy = (i + 0.5) * stride
            for j in range(nx):
                cx = (j + 0.5) * stride
                for r in spec.ratios:
                    root = math.sqrt(r)
                    for s in spec.scales:
                        base = s * stride
                        anchors.append(
                            Box.from_cxcywh(cx, cy, base * root, base / root)
                        )
        out.append(anchors)
    return out


def assign_level(box: Box, spec: PyramidSpec) -> int:
    """Pick the pyramid level responsible for a box by its area.

    A box of side ``LEVEL_CANONICAL_SIDE`` lands on the stride-16 level;
    every doubling of the side moves one level up. The result is clamped
    into the available levels, and zero-area boxes fall to the finest one.
    """
    a = area(box)
    if a <= 0.0:
        return 0
    k0 = round(math.log2(LEVEL_CANONICAL_STRIDE / spec.strides[0]))
    k = k0 + math.floor(math.log2(math.sqrt(a) / LEVEL_CANONICAL_SIDE))
    return min(max(k, 0), len(spec.levels) - 1)


def _check_channels(maps: list[FeatureMap]) -> None:
    channels = {m.tensor.shape[0] for m in maps}
    if len(channels) != 1:
        raise ValueError(f"channel counts differ across levels: {sorted(channels)}")


def fuse_levels(maps: list[FeatureMap]) -> FeatureMap:
    """Collapse a pyramid into a single mid-resolution map.

    Every level is resampled to the middle level's spatial size (bilinear
    when growing, nearest when shrinking) and the results are averaged
    elementwise.

    Raises:
        ValueError: on fewer than two maps or mismatched channel counts.
    """
    if len(maps) < 2:
        raise ValueError("fusion needs at least two levels")
    _check_channels(maps)
    mid = maps[len(maps) // 2]
    th, tw = mid.tensor.shape[1], mid.tensor.shape[2]
    acc = np.zeros_like(mid.tensor)
    for m in maps:
        acc += resize_feature(m.tensor, th, tw)
    return FeatureMap(acc / len(maps), mid.stride)


def redistribute(fused: FeatureMap,
                 originals: list[FeatureMap]) -> list[FeatureMap]:
    """Spread a fused map back over the pyramid as residuals.

    The fused map is resampled to each original level's size and added to
    that level, preserving every level's shape and stride.
    """
    if not originals:
        raise ValueError("no levels to redistribute onto")
    _check_channels([fused] + originals)
    out = []
    for m in originals:
        h, w = m.tensor.shape[1], m.tensor.shape[2]
        out.append(FeatureMap(m.tensor + resize_feature(fused.tensor, h, w),
                              m.stride))
    return out
