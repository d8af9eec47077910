"""Scalar detection losses: smooth-L1 box regression, cross-entropy
classification, the combined per-stage loss, and IoU-family losses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .geometry import Box, Delta, ciou, diou, giou, iou

# Probabilities are clamped here before the log so a hard zero on the
# true class yields a large finite loss instead of an infinity.
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class StageLossInput:
    """Inputs to one cascade stage's loss.

    ``label`` follows the convention that class id 0 is background, so the
    regression branch is active exactly when ``label >= 1``.
    """

    class_scores: Sequence[float]
    label: int
    pred_delta: Delta
    target_delta: Delta
    trade_off: float = 1.0

    def __post_init__(self):
        _validate_scores(self.class_scores)
        if not 0 <= self.label < len(self.class_scores):
            raise ValueError(
                f"label {self.label} outside score vector of length "
                f"{len(self.class_scores)}"
            )


def _validate_scores(scores: Sequence[float]) -> None:
    if len(scores) == 0:
        raise ValueError("empty score vector")
    if any(s < 0.0 for s in scores):
        raise ValueError("scores must be nonnegative")
    total = math.fsum(scores)
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"scores must sum to 1, got {total}")


def smooth_l1(x: float) -> float:
    """Smooth L1: quadratic inside |x| < 1, linear outside, C1 at the join.

        0.5 * x^2       if |x| < 1
        |x| - 0.5       otherwise
    """
    ax = abs(x)
    if ax < 1.0:
        return 0.5 * x * x
    return ax - 0.5


def smooth_l1_grad(x: float) -> float:
    """Derivative of :func:`smooth_l1`: x inside the unit interval, sign(x) outside."""
    if abs(x) < 1.0:
        return x
    return math.copysign(1.0, x)


def loc_loss(a: Delta, b: Delta) -> float:
    """Localization loss: smooth-L1 summed over the four delta components."""
    return math.fsum(
        smooth_l1(pa - pb) for pa, pb in zip(a.as_tuple(), b.as_tuple())
    )


def cls_loss(scores: Sequence[float], label: int) -> float:
    """Cross-entropy of a probability vector against an integer label."""
    _validate_scores(scores)
    if not 0 <= label < len(scores):
        raise ValueError(f"label {label} outside score vector of length {len(scores)}")
    return -math.log(max(scores[label], PROB_FLOOR))


def stage_loss(inp: StageLossInput) -> float:
    """Per-stage loss: classification plus, for foreground labels only,
    the trade-off-weighted localization term."""
    total = cls_loss(inp.class_scores, inp.label)
    if inp.label >= 1:
        total += inp.trade_off * loc_loss(inp.pred_delta, inp.target_delta)
    return total


def giou_loss(a: Box, b: Box) -> float:
    """1 - GIoU, in [0, 2)."""
    return 1.0 - giou(a, b)


def diou_loss(a: Box, b: Box) -> float:
    """1 - DIoU."""
    return 1.0 - diou(a, b)


def ciou_loss(a: Box, b: Box) -> float:
    """1 - CIoU."""
    return 1.0 - ciou(a, b)


def iou_loss(a: Box, b: Box) -> float:
    """1 - IoU, the plain overlap loss the variants extend."""
    return 1.0 - iou(a, b)
