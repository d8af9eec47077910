"""Shared randomized fixtures used by both the unit and acceptance suites."""

import numpy as np

from detkit.evaluation import Annotation, Category, Dataset, DetRecord, ImageInfo
from detkit.geometry import Box


def random_eval_fixture(rng, num_images=3, num_classes=3):
    """A small dataset plus detections of mixed quality: near-hits around
    most ground truths, occasional noise boxes, a sprinkle of crowd
    regions."""
    images = [ImageInfo(i + 1, 100, 100, f"{i}.png")
              for i in range(num_images)]
    annotations = []
    records = []
    ann_id = 1
    for img in images:
        for _ in range(int(rng.integers(1, 5))):
            x1, y1 = rng.uniform(0, 60, 2)
            gt = Box(x1, y1, x1 + rng.uniform(5, 35), y1 + rng.uniform(5, 35))
            cat = int(rng.integers(1, num_classes + 1))
            annotations.append(Annotation(ann_id, img.id, cat, gt,
                                          iscrowd=bool(rng.random() < 0.1)))
            ann_id += 1
            if rng.random() < 0.85:
                dx, dy = rng.normal(0, 4, 2)
                shrink = rng.uniform(0.7, 1.2)
                w = (gt.x2 - gt.x1) * shrink
                h = (gt.y2 - gt.y1) * shrink
                nx1 = max(gt.x1 + dx, 0.0)
                ny1 = max(gt.y1 + dy, 0.0)
                records.append(DetRecord(
                    img.id, cat, Box(nx1, ny1, nx1 + w, ny1 + h),
                    float(np.round(rng.uniform(0.05, 1), 6)),
                ))
        if rng.random() < 0.7:
            x1, y1 = rng.uniform(0, 80, 2)
            records.append(DetRecord(
                img.id, int(rng.integers(1, num_classes + 1)),
                Box(x1, y1, x1 + 10, y1 + 10),
                float(np.round(rng.uniform(0.05, 1), 6)),
            ))
    categories = [Category(c, f"class{c}") for c in range(1, num_classes + 1)]
    return Dataset(images, annotations, categories), records
