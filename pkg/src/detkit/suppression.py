"""Duplicate suppression: hard NMS, soft-NMS score decay, and confidence
filtering, plus the COCO-results JSON record layer detections travel in."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Box, iou

# Overlap thresholds for the two suppression sites of a two-stage
# detector: looser on first-stage proposals, tighter on final outputs.
PROPOSAL_IOU_THR = 0.7
FINAL_IOU_THR = 0.5

# Near-zero confidence cutoff; keeps effectively everything so the
# precision/recall integral loses nothing at the low-score tail.
DEFAULT_SCORE_THR = 0.0001


@dataclass(frozen=True)
class Detection:
    """One scored box of a given class."""

    box: Box
    score: float
    class_id: int

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0) or not math.isfinite(self.score):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def _groups(dets, class_aware):
    """Split indexed detections by class (or keep one group)."""
    indexed = list(enumerate(dets))
    if not class_aware:
        return [indexed]
    by_class: dict[int, list] = {}
    for item in indexed:
        by_class.setdefault(item[1].class_id, []).append(item)
    return [by_class[c] for c in sorted(by_class)]


def _merge_sorted(kept):
    """Canonical output order: score descending, then original index."""
    kept.sort(key=lambda t: (-t[1].score, t[0]))
    return [d for _, d in kept]


def nms(dets: list[Detection], iou_thr: float,
        class_aware: bool = True) -> list[Detection]:
    """Greedy hard NMS.

    Detections are visited in descending score order (ties broken by lower
    input index); each pick removes every remaining same-group detection
    whose IoU with it is >= ``iou_thr``, so any two survivors overlap
    strictly less than the threshold.

    Args:
        dets: input detections, any order.
        iou_thr: overlap threshold in (0, 1].
        class_aware: suppress within each class independently (default)
            or across all classes at once.

    Returns:
        Kept detections sorted by descending score.
    """
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError(f"iou_thr must lie in (0, 1], got {iou_thr}")
    kept: list[tuple[int, Detection]] = []
    for group in _groups(dets, class_aware):
        order = sorted(group, key=lambda t: (-t[1].score, t[0]))
        while order:
            idx, best = order.pop(0)
            kept.append((idx, best))
            order = [
                (i, d) for i, d in order if iou(best.box, d.box) < iou_thr
            ]
    return _merge_sorted(kept)


def soft_nms(dets: list[Detection], iou_thr: float = 0.3, sigma: float = 0.5,
             score_floor: float = 1e-3, method: str = "gaussian",
             class_aware: bool = True) -> list[Detection]:
    """Soft-NMS: decay neighbor scores instead of deleting neighbors.

    Repeatedly selects the remaining detection with the highest current
    score and rescales the others in its group:

        linear:   s *= 1 - iou        when iou > iou_thr
        gaussian: s *= exp(-iou^2 / sigma)   for every overlap

    Detections whose score falls below ``score_floor`` are dropped. Scores
    never increase.

    Args:
        dets: input detections, any order.
        iou_thr: overlap gate for the linear method, in (0, 1].
        sigma: gaussian decay width, > 0.
        score_floor: minimum surviving score in [0, 1].
        method: "linear" or "gaussian".
        class_aware: per-class suppression (default) or global.

    Returns:
        Surviving detections with decayed scores, sorted descending.
    """
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError(f"iou_thr must lie in (0, 1], got {iou_thr}")
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not 0.0 <= score_floor <= 1.0:
        raise ValueError(f"score_floor must lie in [0, 1], got {score_floor}")
    if method not in ("linear", "gaussian"):
        raise ValueError(f"unknown soft-nms method: {method!r}")

    kept: list[tuple[int, Detection]] = []
    for group in _groups(dets, class_aware):
        live = [[i, d, d.score] for i, d in group]
        while live:
            live.sort(key=lambda t: (-t[2], t[0]))
            idx, best, best_score = live.pop(0)
            kept.append((idx, Detection(best.box, best_score, best.class_id)))
            survivors = []
            for entry in live:
                overlap = iou(best.box, entry[1].box)
                if method == "linear":
                    if overlap > iou_thr:
                        entry[2] *= 1.0 - overlap
                else:
                    entry[2] *= math.exp(-(overlap * overlap) / sigma)
                if entry[2] >= score_floor:
                    survivors.append(entry)
            live = survivors
    return _merge_sorted(kept)


def filter_by_score(dets: list[Detection], thr: float) -> list[Detection]:
    """Keep detections with score >= thr, preserving input order."""
    if not 0.0 <= thr <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {thr}")
    return [d for d in dets if d.score >= thr]


def to_records(dets: list[Detection], image_id: int) -> list[dict]:
    """Serialize detections to COCO results records:
    ``{image_id, category_id, bbox: [x, y, w, h], score}``."""
    return [
        {
            "image_id": image_id,
            "category_id": d.class_id,
            "bbox": [d.box.x1, d.box.y1, d.box.width, d.box.height],
            "score": d.score,
        }
        for d in dets
    ]


def from_records(records: list[dict]) -> dict[int, list[Detection]]:
    """Group COCO results records into per-image detection lists.

    Images appear in first-seen order; each image's detections keep their
    record order.
    """
    per_image: dict[int, list[Detection]] = {}
    for rec in records:
        x, y, w, h = rec["bbox"]
        det = Detection(Box.from_xywh(x, y, w, h), rec["score"],
                        rec["category_id"])
        per_image.setdefault(rec["image_id"], []).append(det)
    return per_image
