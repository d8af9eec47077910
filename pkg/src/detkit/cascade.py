"""Multi-stage detection head machinery: IoU-threshold label assignment,
iterative box refinement, staged inference, and the synthetic-refinement
simulation used to study how box quality shifts stage by stage.

Stage heads are plain callables (boxes -> score vectors, boxes -> deltas),
so everything here runs against synthetic oracles; no trained network is
involved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Box, Delta, decode, encode, iou
from .suppression import Detection

Classifier = Callable[[list[Box]], list[Sequence[float]]]
Regressor = Callable[[list[Box]], list[Delta]]


@dataclass(frozen=True)
class CascadeConfig:
    """Stage thresholds and the rule for fusing per-stage class scores.

    Thresholds must be strictly increasing within (0, 1): each stage is a
    stricter judge of box quality than the one before it.
    """

    thresholds: tuple[float, ...] = (0.5, 0.6, 0.7)
    score_fusion: str = "average"

    def __post_init__(self):
        if len(self.thresholds) == 0:
            raise ValueError("at least one stage threshold required")
        for t in self.thresholds:
            if not 0.0 < t < 1.0:
                raise ValueError(f"threshold {t} outside (0, 1)")
        for lo, hi in zip(self.thresholds, self.thresholds[1:]):
            if hi <= lo:
                raise ValueError(
                    f"thresholds must be strictly increasing, got {self.thresholds}"
                )
        if self.score_fusion not in ("average", "last"):
            raise ValueError(f"unknown score fusion: {self.score_fusion!r}")


@dataclass
class StageOutput:
    """Parallel per-box outputs of one stage head."""

    boxes: list[Box]
    class_scores: list[Sequence[float]]
    labels: list[int]

    def __post_init__(self):
        if not len(self.boxes) == len(self.class_scores) == len(self.labels):
            raise ValueError("stage output arrays must have equal length")


def assign_labels(proposals: list[Box], gts: list[tuple[Box, int]],
                  u: float) -> list[tuple[int, int]]:
    """Label proposals against ground truth under an IoU criterion.

    Each proposal is matched to its argmax-IoU ground truth (lowest index
    on ties). If that IoU reaches ``u`` the proposal takes the ground
    truth's class, else it is background: ``(0, -1)``.

    Args:
        proposals: candidate boxes.
        gts: (box, class id) pairs; class ids must be >= 1.
        u: IoU threshold in (0, 1).

    Returns:
        One (label, matched ground-truth index) pair per proposal.
    """
    if not 0.0 < u < 1.0:
        raise ValueError(f"IoU threshold must lie in (0, 1), got {u}")
    for _, cls in gts:
        if cls < 1:
            raise ValueError(f"ground-truth class ids must be >= 1, got {cls}")
    out = []
    for p in proposals:
        best_iou, best_idx = 0.0, -1
        for gi, (g, _) in enumerate(gts):
            o = iou(p, g)
            if o > best_iou:
                best_iou, best_idx = o, gi
        if best_idx >= 0 and best_iou >= u:
            out.append((gts[best_idx][1], best_idx))
        else:
            out.append((0, -1))
    return out


def refine(proposals: list[Box], deltas: list[Delta]) -> list[Box]:
    """Decode one regression step for every proposal."""
    if len(proposals) != len(deltas):
        raise ValueError(
            f"{len(proposals)} proposals vs {len(deltas)} deltas"
        )
    return [decode(p, d) for p, d in zip(proposals, deltas)]


def cascade_inference(proposals: list[Box],
                      stage_fns: list[tuple[Classifier, Regressor]],
                      cfg: CascadeConfig = CascadeConfig()) -> list[Detection]:
    """Run boxes through the full stage chain.

    Each stage scores the current boxes, then regresses them into the next
    stage's inputs. Final class scores are the average of the per-stage
    score vectors (``score_fusion="average"``) or the last stage's alone;
    each box becomes one detection for its best foreground class.
    Suppression is deliberately left to the caller.

    Raises:
        ValueError: if the number of stage functions does not match the
            configured thresholds, or score vectors have no foreground
            classes.
    """
    if len(stage_fns) != len(cfg.thresholds):
        raise ValueError(
            f"{len(stage_fns)} stage functions for {len(cfg.thresholds)} thresholds"
        )
    boxes = list(proposals)
    per_stage_scores = []
    for classify, regress in stage_fns:
        scores = [np.asarray(s, dtype=float) for s in classify(boxes)]
        if any(len(s) < 2 for s in scores):
            raise ValueError("score vectors need a background plus >= 1 class")
        per_stage_scores.append(scores)
        boxes = refine(boxes, regress(boxes))

    if cfg.score_fusion == "last":
        fused = per_stage_scores[-1]
    else:
        fused = [
            sum(stage[i] for stage in per_stage_scores) / len(per_stage_scores)
            for i in range(len(boxes))
        ]

    dets = []
    for box, scores in zip(boxes, fused):
        fg = scores[1:]
        cls = int(np.argmax(fg)) + 1
        dets.append(Detection(box, float(min(max(fg[cls - 1], 0.0), 1.0)), cls))
    return dets


def quality_distribution(proposals: list[Box], gts: list[Box],
                         bins: int = 10) -> np.ndarray:
    """Histogram of per-proposal max IoU against ground truth.

    Bins partition [0, 1] evenly; the top bin includes 1.0.

    Raises:
        ValueError: on empty ground truth or non-positive bin count.
    """
    if not gts:
        raise ValueError("quality distribution needs ground-truth boxes")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    best = max_ious(proposals, gts)
    counts, _ = np.histogram(best, bins=bins, range=(0.0, 1.0))
    return counts


def max_ious(proposals: list[Box], gts: list[Box]) -> np.ndarray:
    """Max IoU of each proposal over all ground-truth boxes."""
    return np.array(
        [max((iou(p, g) for g in gts), default=0.0) for p in proposals]
    )


def constant_classifier(num_classes: int) -> Classifier:
    """Uniform score vectors over background + ``num_classes`` classes."""
    probs = tuple(1.0 / (num_classes + 1) for _ in range(num_classes + 1))

    def classify(boxes: list[Box]) -> list[Sequence[float]]:
        return [probs for _ in boxes]

    return classify


def identity_regressor() -> Regressor:
    """Zero deltas: boxes pass through unchanged."""

    def regress(boxes: list[Box]) -> list[Delta]:
        return [Delta(0.0, 0.0, 0.0, 0.0) for _ in boxes]

    return regress


def oracle_regressor(gts: list[Box], strength: float = 1.0) -> Regressor:
    """Regressor that knows the ground truth.

    For every box it emits ``strength`` times the exact deltas toward the
    box's best-overlapping ground truth (closest center on zero-overlap
    ties). ``strength=1`` snaps boxes onto the ground truth in one step;
    fractional strengths model the partial corrections of a trained head.
    """
    if not gts:
        raise ValueError("oracle regressor needs ground-truth boxes")

    def nearest(box: Box) -> Box:
        best, best_key = None, None
        for g in gts:
            dist = (box.cx - g.cx) ** 2 + (box.cy - g.cy) ** 2
            key = (-iou(box, g), dist)
            if best_key is None or key < best_key:
                best, best_key = g, key
        return best

    def regress(boxes: list[Box]) -> list[Delta]:
        return [encode(b, nearest(b)).scaled(strength) for b in boxes]

    return regress


def jitter_boxes(gts: list[Box], rng: np.random.Generator,
                 center_sigma: float = 0.35,
                 size_sigma: float = 0.35) -> list[Box]:
    """Gaussian-perturb boxes: centers shifted by N(0, sigma*side), sides
    scaled log-normally. Always yields positive-sized boxes."""
    out = []
    for g in gts:
        cx = g.cx + rng.normal(0.0, center_sigma) * g.width
        cy = g.cy + rng.normal(0.0, center_sigma) * g.height
        w = g.width * np.exp(rng.normal(0.0, size_sigma))
        h = g.height * np.exp(rng.normal(0.0, size_sigma))
        out.append(Box.from_cxcywh(cx, cy, w, h))
    return out


def simulate_refinement(seed: int, num_gts: int = 8, proposals_per_gt: int = 40,
                        canvas: tuple[float, float] = (640.0, 640.0),
                        thresholds: tuple[float, ...] = (0.5, 0.6, 0.7),
                        strength: float = 0.5,
                        center_sigma: float = 0.35,
                        size_sigma: float = 0.35) -> list[np.ndarray]:
    """One synthetic refinement trial.

    Draws random ground-truth boxes on a canvas, surrounds them with
    gaussian-jittered proposals, then refines all proposals through one
    partial oracle regression step per stage threshold.

    Returns:
        Max-IoU arrays: index 0 for the raw proposals, then one per stage.
    """
    if num_gts < 1 or proposals_per_gt < 1:
        raise ValueError("need at least one ground truth and one proposal")
    rng = np.random.default_rng(seed)
    cw, ch = canvas
    gts = []
    for _ in range(num_gts):
        w = rng.uniform(0.05, 0.3) * cw
        h = rng.uniform(0.05, 0.3) * ch
        cx = rng.uniform(w / 2, cw - w / 2)
        cy = rng.uniform(h / 2, ch - h / 2)
        gts.append(Box.from_cxcywh(cx, cy, w, h))

    proposals = []
    for _ in range(proposals_per_gt):
        proposals.extend(jitter_boxes(gts, rng, center_sigma, size_sigma))

    regress = oracle_regressor(gts, strength=strength)
    stages = [max_ious(proposals, gts)]
    boxes = proposals
    for _ in thresholds:
        boxes = refine(boxes, regress(boxes))
        stages.append(max_ious(boxes, gts))
    return stages
