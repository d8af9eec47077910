"""detkit: framework-independent numerical core for two-stage detection
pipelines -- box regression, cascade refinement, deformable sampling,
suppression, augmentation, sampling, scheduling, and COCO-style mAP."""

from .geometry import Box, Delta, area, ciou, clip, decode, diou, encode, giou, iou
from .suppression import Detection, filter_by_score, nms, soft_nms

__version__ = "0.1.0"

__all__ = [
    "Box", "Delta", "Detection",
    "area", "iou", "giou", "diou", "ciou",
    "encode", "decode", "clip",
    "nms", "soft_nms", "filter_by_score",
    "__version__",
]
