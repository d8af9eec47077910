"""Axis-aligned box arithmetic, IoU-family overlap metrics, and the
center/size delta parameterization used for bounding box regression.

All functions are pure and operate on single boxes; callers that need
batched behaviour loop or vectorize on their side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Default clamp for log-size components during decoding, i.e. a maximum
# size ratio of 62.5x between the decoded box and its anchor.
LOG_SIZE_CLIP = math.log(62.5)


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle in pixel coordinates, corner convention.

    Invariants: ``x2 >= x1``, ``y2 >= y1``, all coordinates finite.
    Degenerate (zero-area) boxes are representable -- augmentation can
    legitimately produce them -- but cannot serve as regression anchors
    or targets (see :func:`encode`).
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def cx(self) -> float:
        """Center x coordinate."""
        return 0.5 * (self.x1 + self.x2)

    @property
    def cy(self) -> float:
        """Center y coordinate."""
        return 0.5 * (self.y1 + self.y2)

    @classmethod
    def from_cxcywh(cls, cx: float, cy: float, w: float, h: float) -> "Box":
        """Build a box from center point and size."""
        return cls(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "Box":
        """Build a box from top-left corner and size (COCO bbox layout)."""
        return cls(x, y, x + w, y + h)

    def as_xyxy(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def as_xywh(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.width, self.height)


@dataclass(frozen=True)
class Delta:
    """Normalized regression offsets between an anchor box and a target.

    ``dx``/``dy`` are center shifts in units of the anchor size; ``dw``/``dh``
    are log size ratios, so decoding always yields a positive-sized box.
    """

    dx: float
    dy: float
    dw: float
    dh: float

    def __post_init__(self):
        parts = (self.dx, self.dy, self.dw, self.dh)
        if not all(math.isfinite(p) for p in parts):
            raise ValueError(f"delta components must be finite, got {parts}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.dx, self.dy, self.dw, self.dh)

    def scaled(self, factor: float) -> "Delta":
        """Uniformly scale all four components (partial regression step)."""
        return Delta(self.dx * factor, self.dy * factor,
                     self.dw * factor, self.dh * factor)


def area(b: Box) -> float:
    """Box area; zero for degenerate boxes."""
    return b.width * b.height


def _intersection(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def _enclosing(a: Box, b: Box) -> Box:
    return Box(min(a.x1, b.x1), min(a.y1, b.y1),
               max(a.x2, b.x2), max(a.y2, b.y2))


def iou(a: Box, b: Box) -> float:
    """Intersection over union in [0, 1].

    Symmetric; pairs of zero-area boxes yield 0.0 by convention.
    """
    inter = _intersection(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: Box, b: Box) -> float:
    """Generalized IoU: IoU minus the enclosing-box penalty, in (-1, 1].

    Falls back to plain IoU when the enclosing box is degenerate. The
    penalty is clamped at zero so rounding in the union sum can never push
    the result above plain IoU.
    """
    i = iou(a, b)
    c_area = area(_enclosing(a, b))
    if c_area <= 0.0:
        return i
    union = area(a) + area(b) - _intersection(a, b)
    return i - max(c_area - union, 0.0) / c_area


def diou(a: Box, b: Box) -> float:
    """Distance IoU: IoU minus the normalized squared center distance.

    Falls back to plain IoU when the enclosing box is degenerate.
    """
    i = iou(a, b)
    c = _enclosing(a, b)
    diag_sq = c.width ** 2 + c.height ** 2
    if diag_sq <= 0.0:
        return i
    dist_sq = (a.cx - b.cx) ** 2 + (a.cy - b.cy) ** 2
    return i - dist_sq / diag_sq


def ciou(a: Box, b: Box) -> float:
    """Complete IoU: DIoU with an additional aspect-ratio penalty.

    The aspect term is ``v = 4/pi^2 * (atan(wa/ha) - atan(wb/hb))^2``
    weighted by ``alpha = v / ((1 - iou) + v)``; ``atan2`` keeps it
    defined for degenerate sides.
    """
    i = iou(a, b)
    d = diou(a, b)
    v = (4.0 / math.pi ** 2) * (
        math.atan2(a.width, a.height) - math.atan2(b.width, b.height)
    ) ** 2
    if v == 0.0:
        return d
    alpha = v / ((1.0 - i) + v)
    return d - alpha * v


def encode(b: Box, g: Box) -> Delta:
    """Regression offsets that carry anchor ``b`` onto target ``g``.

    dx = (gx - bx) / bw    dy = (gy - by) / bh
    dw = log(gw / bw)      dh = log(gh / bh)

    where (x, y) is the box center and (w, h) its size.

    Raises:
        ValueError: if either box has a non-positive width or height.
    """
    if b.width <= 0.0 or b.height <= 0.0:
        raise ValueError(f"anchor box must be positive-sized, got {b}")
    if g.width <= 0.0 or g.height <= 0.0:
        raise ValueError(f"target box must be positive-sized, got {g}")
    return Delta(
        (g.cx - b.cx) / b.width,
        (g.cy - b.cy) / b.height,
        math.log(g.width / b.width),
        math.log(g.height / b.height),
    )


def decode(b: Box, d: Delta, max_log_size: float = LOG_SIZE_CLIP) -> Box:
    """Apply regression offsets ``d`` to anchor ``b``; inverse of :func:`encode`.

    ``dw``/``dh`` are clamped to ``[-max_log_size, max_log_size]`` so the
    exponential cannot overflow on unbounded regressor outputs.

    Raises:
        ValueError: if ``b`` has a non-positive width or height.
    """
    if b.width <= 0.0 or b.height <= 0.0:
        raise ValueError(f"anchor box must be positive-sized, got {b}")
    dw = min(max(d.dw, -max_log_size), max_log_size)
    dh = min(max(d.dh, -max_log_size), max_log_size)
    return Box.from_cxcywh(
        b.cx + b.width * d.dx,
        b.cy + b.height * d.dy,
        b.width * math.exp(dw),
        b.height * math.exp(dh),
    )


def clip(b: Box, w: float, h: float) -> Box:
    """Clamp a box into the image rectangle [0, w] x [0, h].

    Idempotent; may produce degenerate boxes for inputs fully outside.
    """
    if w <= 0.0 or h <= 0.0:
        raise ValueError(f"image size must be positive, got {(w, h)}")
    return Box(
        min(max(b.x1, 0.0), w),
        min(max(b.y1, 0.0), h),
        min(max(b.x2, 0.0), w),
        min(max(b.y2, 0.0), h),
    )
