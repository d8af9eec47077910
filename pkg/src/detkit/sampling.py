"""Dataset sampling strategies.

The instance-balanced sampler draws images with probability proportional
to the sum of inverse class frequencies over their instances, so rare
classes get sampled as often as common ones in the long run.
"""

from __future__ import annotations

import numpy as np

from .evaluation import Dataset


def class_histogram(dataset: Dataset) -> dict[int, int]:
    """Instance count per category id (zero for unused categories)."""
    counts = {cat.id: 0 for cat in dataset.categories}
    for ann in dataset.annotations:
        counts[ann.category_id] += 1
    return counts


def image_weights(dataset: Dataset) -> np.ndarray:
    """Per-image sampling weight: sum over the image's instances of
    1 / count(class). Images without instances weigh zero."""
    counts = class_histogram(dataset)
    weights = np.zeros(len(dataset.images))
    index = {img.id: i for i, img in enumerate(dataset.images)}
    for ann in dataset.annotations:
        weights[index[ann.image_id]] += 1.0 / counts[ann.category_id]
    return weights


def instance_balanced_sample(dataset: Dataset, n: int,
                             seed: int) -> list[int]:
    """Draw ``n`` image indices, weighted toward rare-class instances.

    Falls back to uniform sampling when the dataset has no instances at
    all. Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    if not dataset.images:
        raise ValueError("cannot sample from an empty dataset")
    weights = image_weights(dataset)
    total = weights.sum()
    if total <= 0.0:
        probs = np.full(len(dataset.images), 1.0 / len(dataset.images))
    else:
        probs = weights / total
    rng = np.random.default_rng(seed)
    return rng.choice(len(dataset.images), size=n, replace=True,
                      p=probs).tolist()


def random_sample(dataset: Dataset, n: int, seed: int) -> list[int]:
    """Uniform image sampling with replacement; deterministic per seed."""
    if not dataset.images:
        raise ValueError("cannot sample from an empty dataset")
    if n < 0:
        raise ValueError(f"sample size must be >= 0, got {n}")
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    return rng.integers(0, len(dataset.images), size=n).tolist()
