"""COCO-format dataset ingestion and mean-average-precision evaluation
over the 0.50:0.05:0.95 IoU threshold range.

Protocol: greedy score-ordered matching, each ground truth used at most
once, 101-point interpolated AP per class per threshold, averaged over
thresholds then classes. Crowd-flagged regions are ignore zones: an
unmatched detection mostly inside one is neither a true nor a false
positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box, iou
from .suppression import Detection


class DatasetError(Exception):
    """Base for annotation/results ingestion failures."""


class MalformedJsonError(DatasetError):
    """The file is not valid JSON."""


class SchemaError(DatasetError):
    """Required keys are missing or values have the wrong shape."""


class IntegrityError(DatasetError):
    """Cross-references between ids are broken."""


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int
    file_name: str


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    box: Box
    iscrowd: bool = False


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass
class Dataset:
    """COCO-style image/annotation/category collection with verified ids."""

    images: list[ImageInfo]
    annotations: list[Annotation]
    categories: list[Category]

    def annotations_by_image(self) -> dict[int, list[Annotation]]:
        out: dict[int, list[Annotation]] = {img.id: [] for img in self.images}
        for ann in self.annotations:
            out[ann.image_id].append(ann)
        return out

    @property
    def image_ids(self) -> set[int]:
        return {img.id for img in self.images}

    @property
    def category_ids(self) -> set[int]:
        return {cat.id for cat in self.categories}


def xywh_to_box(bbox: Sequence[float]) -> Box:
    """COCO [x, y, w, h] to corner form."""
    if len(bbox) != 4:
        raise SchemaError(f"bbox must have 4 entries, got {list(bbox)}")
    x, y, w, h = (float(v) for v in bbox)
    if w < 0 or h < 0 or not all(math.isfinite(v) for v in (x, y, w, h)):
        raise SchemaError(f"bbox must have finite nonnegative size, got {bbox}")
    return Box.from_xywh(x, y, w, h)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"missing key {key!r} in {where}")
    return obj[key]


def parse_dataset(doc) -> Dataset:
    """Validate a decoded COCO annotation document."""
    if not isinstance(doc, dict):
        raise SchemaError("annotation document must be a JSON object")
    images = []
    for i, rec in enumerate(_require(doc, "images", "document")):
        images.append(ImageInfo(
            id=int(_require(rec, "id", f"images[{i}]")),
            width=int(_require(rec, "width", f"images[{i}]")),
            height=int(_require(rec, "height", f"images[{i}]")),
            file_name=str(_require(rec, "file_name", f"images[{i}]")),
        ))
    categories = []
    for i, rec in enumerate(_require(doc, "categories", "document")):
        categories.append(Category(
            id=int(_require(rec, "id", f"categories[{i}]")),
            name=str(_require(rec, "name", f"categories[{i}]")),
        ))
    annotations = []
    for i, rec in enumerate(_require(doc, "annotations", "document")):
        where = f"annotations[{i}]"
        annotations.append(Annotation(
            id=int(_require(rec, "id", where)),
            image_id=int(_require(rec, "image_id", where)),
            category_id=int(_require(rec, "category_id", where)),
            box=xywh_to_box(_require(rec, "bbox", where)),
            iscrowd=bool(rec.get("iscrowd", 0)),
        ))

    image_ids = [img.id for img in images]
    if len(set(image_ids)) != len(image_ids):
        raise IntegrityError("duplicate image ids")
    cat_ids = [cat.id for cat in categories]
    if len(set(cat_ids)) != len(cat_ids):
        raise IntegrityError("duplicate category ids")
    ann_ids = [a.id for a in annotations]
    if len(set(ann_ids)) != len(ann_ids):
        raise IntegrityError("duplicate annotation ids")
    image_set, cat_set = set(image_ids), set(cat_ids)
    for a in annotations:
        if a.image_id not in image_set:
            raise IntegrityError(
                f"annotation {a.id} references unknown image {a.image_id}"
            )
        if a.category_id not in cat_set:
            raise IntegrityError(
                f"annotation {a.id} references unknown category {a.category_id}"
            )
    return Dataset(images, annotations, categories)


def load_coco(path) -> Dataset:
    """Load and verify a COCO annotation file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"{path}: {exc}") from exc
    return parse_dataset(doc)


@dataclass(frozen=True)
class DetRecord:
    """One detection of a COCO results file."""

    image_id: int
    category_id: int
    box: Box
    score: float


def parse_results(doc) -> list[DetRecord]:
    """Validate a decoded COCO results document (a list of records)."""
    if not isinstance(doc, list):
        raise SchemaError("results document must be a JSON array")
    out = []
    for i, rec in enumerate(doc):
        where = f"results[{i}]"
        score = float(_require(rec, "score", where))
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"{where}: score {score} outside [0, 1]")
        out.append(DetRecord(
            image_id=int(_require(rec, "image_id", where)),
            category_id=int(_require(rec, "category_id", where)),
            box=xywh_to_box(_require(rec, "bbox", where)),
            score=score,
        ))
    return out


def load_results(path) -> list[DetRecord]:
    """Load and verify a COCO results file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"{path}: {exc}") from exc
    return parse_results(doc)


def match(dets: list[Detection], gts: list[Box], iou_thr: float) -> list[bool]:
    """Greedy TP/FP matching of detections against ground-truth boxes.

    Detections are visited in descending score order (lower input index on
    ties); each one matches the highest-IoU not-yet-matched ground truth
    provided that IoU reaches ``iou_thr``. Flags are returned in the input
    order of ``dets``.
    """
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError(f"iou_thr must lie in (0, 1], got {iou_thr}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    flags = [False] * len(dets)
    taken = [False] * len(gts)
    for i in order:
        best_iou, best_j = 0.0, -1
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            o = iou(dets[i].box, g)
            if o > best_iou:
                best_iou, best_j = o, j
        if best_j >= 0 and best_iou >= iou_thr:
            taken[best_j] = True
            flags[i] = True
    return flags


def _inside_fraction(det: Box, region: Box) -> float:
    """Fraction of the detection's area inside a region (intersection over
    detection area); 0 for degenerate detections."""
    det_area = det.width * det.height
    if det_area <= 0.0:
        return 0.0
    iw = min(det.x2, region.x2) - max(det.x1, region.x1)
    ih = min(det.y2, region.y2) - max(det.y1, region.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return (iw * ih) / det_area


def match_with_ignore(dets: list[Detection], gts: list[Box],
                      crowd_regions: list[Box],
                      iou_thr: float) -> list[bool | None]:
    """Like :func:`match`, but detections that fail to match a real ground
    truth and sit mostly (>= iou_thr of their area) inside a crowd region
    are flagged ``None`` -- ignored, neither TP nor FP."""
    flags: list[bool | None] = list(match(dets, gts, iou_thr))
    for i, f in enumerate(flags):
        if f:
            continue
        for region in crowd_regions:
            if _inside_fraction(dets[i].box, region) >= iou_thr:
                flags[i] = None
                break
    return flags


def average_precision(flags: Sequence[bool], num_gt: int) -> float | None:
    """101-point interpolated average precision.

    ``flags`` are TP/FP indicators in descending score order. The
    precision envelope (running maximum from the right) is sampled at
    recalls 0.00, 0.01, ..., 1.00 and averaged.

    Returns:
        AP in [0, 1]; None when there is nothing to score (no ground truth
        and no detections), 0.0 when detections exist but no ground truth.
    """
    if num_gt < 0:
        raise ValueError(f"num_gt must be >= 0, got {num_gt}")
    if num_gt == 0:
        return None if len(flags) == 0 else 0.0
    if len(flags) == 0:
        return 0.0
    arr = np.asarray(flags, dtype=bool)
    tp = np.cumsum(arr)
    fp = np.cumsum(~arr)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for i in range(101):
        r = i / 100.0
        idx = int(np.searchsorted(recall, r, side="left"))
        if idx < len(envelope):
            total += float(envelope[idx])
    return total / 101.0


def iou_thresholds(lo: float = 0.5, hi: float = 0.95,
                   step: float = 0.05) -> list[float]:
    """The evaluation threshold grid, endpoint included."""
    if step <= 0 or hi < lo:
        raise ValueError(f"bad threshold range {lo}:{hi}:{step}")
    n = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


@dataclass
class EvalResult:
    """Per-class AP at each threshold plus the aggregated means.

    ``per_class[cat_id][k]`` is the AP at ``thresholds[k]``; a class with
    neither ground truth nor detections carries None and is excluded from
    every mean.
    """

    thresholds: list[float]
    per_class: dict[int, list[float] | None]
    per_class_ap: dict[int, float | None]
    mean_ap: float

    def to_json_dict(self) -> dict:
        return {
            "iou_thresholds": self.thresholds,
            "per_class": {
                str(c): v for c, v in sorted(self.per_class.items())
            },
            "per_class_ap": {
                str(c): v for c, v in sorted(self.per_class_ap.items())
            },
            "mean_ap": self.mean_ap,
        }

    def table(self, names: dict[int, str] | None = None) -> str:
        """Human-readable per-class summary, ordered by category id."""
        names = names or {}
        header = f"{'category':<24}" + "".join(
            f" AP@{t:.2f}" for t in self.thresholds
        ) + "     mean"
        lines = [header, "-" * len(header)]
        for cat_id in sorted(self.per_class):
            label = names.get(cat_id, str(cat_id))
            row = f"{label:<24}"
            aps = self.per_class[cat_id]
            if aps is None:
                row += " (no ground truth, no detections)"
            else:
                row += "".join(f" {ap:7.4f}" for ap in aps)
                row += f"  {self.per_class_ap[cat_id]:7.4f}"
            lines.append(row)
        lines.append("-" * len(header))
        lo, hi = self.thresholds[0], self.thresholds[-1]
        lines.append(f"mAP@{lo:.2f}:{hi:.2f}: {self.mean_ap:.4f}")
        return "\n".join(lines)


def _content_key(rec: DetRecord):
    # Total, content-based order: output is independent of input ordering.
    return (-rec.score, rec.image_id, rec.box.x1, rec.box.y1,
            rec.box.x2, rec.box.y2)


def map_50_95(records: list[DetRecord], dataset: Dataset,
              iou_lo: float = 0.5, iou_hi: float = 0.95,
              iou_step: float = 0.05,
              max_dets: int | None = None) -> EvalResult:
    """Evaluate detections against a dataset over an IoU threshold grid.

    AP is computed per class per threshold on the globally merged,
    score-sorted detection stream, averaged over thresholds, then over
    classes.

    Args:
        records: COCO-style detection records.
        dataset: verified ground-truth collection.
        max_dets: optional per-image cap, keeping the highest-scoring
            detections across all classes (None = no cap).

    Raises:
        ValueError: on an empty dataset (no images or no categories).
        IntegrityError: when records reference unknown image or category ids.
    """
    if not dataset.images or not dataset.categories:
        raise ValueError("empty dataset: needs at least one image and category")
    image_set = dataset.image_ids
    cat_set = dataset.category_ids
    for rec in records:
        if rec.image_id not in image_set:
            raise IntegrityError(f"detection references unknown image {rec.image_id}")
        if rec.category_id not in cat_set:
            raise IntegrityError(
                f"detection references unknown category {rec.category_id}"
            )

    if max_dets is not None:
        capped = []
        by_image: dict[int, list[DetRecord]] = {}
        for rec in records:
            by_image.setdefault(rec.image_id, []).append(rec)
        for img_id in by_image:
            ranked = sorted(by_image[img_id], key=_content_key)
            capped.extend(ranked[:max_dets])
        records = capped

    thresholds = iou_thresholds(iou_lo, iou_hi, iou_step)
    anns_by_image = dataset.annotations_by_image()
    cat_ids = sorted(dataset.category_ids)

    per_class: dict[int, list[float] | None] = {}
    per_class_ap: dict[int, float | None] = {}
    class_means = []
    for cat in cat_ids:
        dets_c = sorted(
            (r for r in records if r.category_id == cat), key=_content_key
        )
        num_gt = sum(
            1 for a in dataset.annotations
            if a.category_id == cat and not a.iscrowd
        )
        if num_gt == 0 and not dets_c:
            per_class[cat] = None
            per_class_ap[cat] = None
            continue

        aps = []
        for thr in thresholds:
            merged: list[tuple[DetRecord, bool | None]] = []
            for img in dataset.images:
                img_dets = [r for r in dets_c if r.image_id == img.id]
                anns = [a for a in anns_by_image[img.id] if a.category_id == cat]
                gts = [a.box for a in anns if not a.iscrowd]
                crowds = [a.box for a in anns if a.iscrowd]
                as_dets = [Detection(r.box, r.score, r.category_id)
                           for r in img_dets]
                flags = match_with_ignore(as_dets, gts, crowds, thr)
                merged.extend(zip(img_dets, flags))
            merged.sort(key=lambda pair: _content_key(pair[0]))
            scored = [f for _, f in merged if f is not None]
            ap = average_precision(scored, num_gt)
            aps.append(0.0 if ap is None else ap)
        per_class[cat] = aps
        class_mean = float(np.mean(aps))
        per_class_ap[cat] = class_mean
        class_means.append(class_mean)

    if not class_means:
        raise ValueError("no class has ground truth or detections to score")
    return EvalResult(thresholds, per_class, per_class_ap,
                      float(np.mean(class_means)))
