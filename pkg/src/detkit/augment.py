"""Image and box augmentations: flips, quarter-turn rotations, cutout,
mixup, multi-scale resize, and ground-truth box jitter.

Images are (C, H, W) float arrays; box coordinates live in the continuous
[0, W] x [0, H] rectangle. Every transform returns a new Sample, keeps
labels aligned with boxes, and clips boxes back into the image. All
randomness comes from explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, clip
from .resize import bilinear_resize


@dataclass
class Sample:
    """One training example: image, boxes, labels, per-box blend weights."""

    image: np.ndarray
    boxes: list[Box]
    labels: list[int]
    weights: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=float)
        if self.image.ndim != 3:
            raise ValueError(f"image must be (C, H, W), got {self.image.shape}")
        if len(self.boxes) != len(self.labels):
            raise ValueError(
                f"{len(self.boxes)} boxes vs {len(self.labels)} labels"
            )
        if not self.weights:
            self.weights = [1.0] * len(self.boxes)
        if len(self.weights) != len(self.boxes):
            raise ValueError(
                f"{len(self.boxes)} boxes vs {len(self.weights)} weights"
            )

    @property
    def width(self) -> float:
        return float(self.image.shape[2])

    @property
    def height(self) -> float:
        return float(self.image.shape[1])


def _clipped(boxes: list[Box], w: float, h: float) -> list[Box]:
    return [clip(b, w, h) for b in boxes]


def hflip(s: Sample) -> Sample:
    """Mirror left-right. Involution: applying twice restores the input."""
    w = s.width
    image = np.ascontiguousarray(s.image[:, :, ::-1])
    boxes = [Box(w - b.x2, b.y1, w - b.x1, b.y2) for b in s.boxes]
    return Sample(image, _clipped(boxes, w, s.height), list(s.labels),
                  list(s.weights))


def vflip(s: Sample) -> Sample:
    """Mirror top-bottom."""
    h = s.height
    image = np.ascontiguousarray(s.image[:, ::-1, :])
    boxes = [Box(b.x1, h - b.y2, b.x2, h - b.y1) for b in s.boxes]
    return Sample(image, _clipped(boxes, s.width, h), list(s.labels),
                  list(s.weights))


def rotate90(s: Sample, k: int) -> Sample:
    """Rotate by k quarter turns counter-clockwise (as displayed, origin
    top-left). Swaps width and height for odd k; four turns compose to
    the identity.

    Args:
        k: 1, 2 or 3.
    """
    if k not in (1, 2, 3):
        raise ValueError(f"k must be 1, 2 or 3, got {k}")
    out = s
    for _ in range(k):
        out = _rotate90_once(out)
    return out


def _rotate90_once(s: Sample) -> Sample:
    # Continuous point map for one CCW quarter turn: (x, y) -> (y, W - x).
    w = s.width
    image = np.ascontiguousarray(s.image.transpose(0, 2, 1)[:, ::-1, :])
    boxes = [Box(b.y1, w - b.x2, b.y2, w - b.x1) for b in s.boxes]
    return Sample(image, _clipped(boxes, s.height, w), list(s.labels),
                  list(s.weights))


def cutout(s: Sample, rects: list[Box], fill: float = 0.0) -> Sample:
    """Overwrite rectangular image regions with a constant.

    A pixel is covered when its center lies inside a rectangle. Boxes and
    labels are untouched.
    """
    image = s.image.copy()
    _, h, w = image.shape
    for r in rects:
        x_lo = max(int(np.ceil(r.x1 - 0.5)), 0)
        x_hi = min(int(np.floor(r.x2 - 0.5)), w - 1)
        y_lo = max(int(np.ceil(r.y1 - 0.5)), 0)
        y_hi = min(int(np.floor(r.y2 - 0.5)), h - 1)
        if x_lo <= x_hi and y_lo <= y_hi:
            image[:, y_lo:y_hi + 1, x_lo:x_hi + 1] = fill
    return Sample(image, list(s.boxes), list(s.labels), list(s.weights))


def mixup(a: Sample, b: Sample, lam: float) -> Sample:
    """Blend two samples: ``lam * a + (1 - lam) * b`` on pixels, union on
    boxes. Box weights are scaled by the blend factor of their source, so
    nested mixups compose.

    Raises:
        ValueError: on mismatched image shapes or lam outside [0, 1].
    """
    if a.image.shape != b.image.shape:
        raise ValueError(
            f"image shapes differ: {a.image.shape} vs {b.image.shape}"
        )
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    image = lam * a.image + (1.0 - lam) * b.image
    boxes = list(a.boxes) + list(b.boxes)
    labels = list(a.labels) + list(b.labels)
    weights = [lam * w for w in a.weights] + [(1.0 - lam) * w for w in b.weights]
    return Sample(image, boxes, labels, weights)


def multiscale_resize(s: Sample, target: tuple[int, int]) -> Sample:
    """Bilinear-resize the image to ``target = (width, height)`` and scale
    boxes by the same factors, preserving their relative geometry."""
    tw, th = target
    if tw < 1 or th < 1:
        raise ValueError(f"target size must be positive, got {target}")
    sx = tw / s.width
    sy = th / s.height
    image = bilinear_resize(s.image, th, tw)
    boxes = [Box(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy) for b in s.boxes]
    return Sample(image, _clipped(boxes, float(tw), float(th)),
                  list(s.labels), list(s.weights))


def bbox_jitter(boxes: list[Box], magnitude: float,
                rng_seed: int) -> list[Box]:
    """Perturb box corners to absorb labeling noise.

    Each of the four corner coordinates moves by uniform noise in
    ``[-magnitude * side, +magnitude * side]`` of the matching box side;
    corners are re-sorted afterwards, so outputs are valid boxes.
    Magnitude 0 is the identity and a fixed seed fixes the output.
    """
    if magnitude < 0.0:
        raise ValueError(f"magnitude must be >= 0, got {magnitude}")
    if magnitude == 0.0:
        return list(boxes)
    rng = np.random.default_rng(rng_seed)
    out = []
    for b in boxes:
        noise = rng.uniform(-magnitude, magnitude, size=4)
        x1 = b.x1 + noise[0] * b.width
        y1 = b.y1 + noise[1] * b.height
        x2 = b.x2 + noise[2] * b.width
        y2 = b.y2 + noise[3] * b.height
        out.append(Box(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)))
    return out
