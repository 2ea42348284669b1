"""Per-image selection scores computed from a detector's predictions.

Input confidences are taken as given. Upstream they are expected to be
class probability multiplied by localisation IoU; nothing here recomputes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from tabal.config import ScoringConfig
from tabal.geometry import BinaryMask, BoundingBox, mask_iou, pairwise_iou, rasterize_boxes


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass
class PredictionRecord:
    image_id: str
    image_width: int
    image_height: int
    detections: list = field(default_factory=list)
    segmentation_mask: Optional[BinaryMask] = None

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.segmentation_mask is not None and self.segmentation_mask.shape != (
            self.image_width,
            self.image_height,
        ):
            raise ValueError(
                f"segmentation mask {self.segmentation_mask.width}x{self.segmentation_mask.height} "
                f"does not match image {self.image_width}x{self.image_height} ({self.image_id})"
            )

    @property
    def boxes(self) -> list:
        return [d.box for d in self.detections]

    @property
    def confidences(self) -> list:
        return [d.confidence for d in self.detections]


@dataclass(frozen=True)
class ImageScore:
    image_id: str
    mean_confidence: Optional[float]
    entropy: float
    bba: float
    ma: Optional[float]
    table_count: int


def mean_confidence(rec: PredictionRecord) -> Optional[float]:
    if not rec.detections:
        return None
    return math.fsum(rec.confidences) / len(rec.detections)


def binary_entropy(p: float) -> float:
    """Binary entropy in nats; exactly 0 at p in {0, 1}."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log(1.0 - p)


def binary_entropy_score(rec: PredictionRecord) -> float:
    """Entropy of the most uncertain detected table (0 with no detections).

    Each detection is one table's single box, so the per-table sum has one
    term and the query reduces to a max over detections.
    """
    return max((binary_entropy(p) for p in rec.confidences), default=0.0)


def bba_score(rec: PredictionRecord, t_iou: float) -> float:
    """Fraction of detections whose best IoU with another detection exceeds t_iou."""
    n = len(rec.detections)
    if n <= 1:
        return 0.0
    iou = pairwise_iou(rec.boxes)
    np.fill_diagonal(iou, -1.0)
    flagged = int(np.count_nonzero(iou.max(axis=1) > t_iou))
    return flagged / n


def detection_mask(rec: PredictionRecord) -> BinaryMask:
    return rasterize_boxes(rec.boxes, rec.image_width, rec.image_height)


def ma_score(rec: PredictionRecord) -> Optional[float]:
    """1 - IoU(detection mask, segmentation mask); None without a segmentation mask.

    All detections contribute to the detection mask; there is no confidence floor.
    """
    if rec.segmentation_mask is None:
        return None
    return 1.0 - mask_iou(detection_mask(rec), rec.segmentation_mask)


def table_count(rec: PredictionRecord, conf_floor: float = 0.5) -> int:
    return sum(1 for p in rec.confidences if p >= conf_floor)


def score_record(rec: PredictionRecord, config: ScoringConfig) -> ImageScore:
    return ImageScore(
        image_id=rec.image_id,
        mean_confidence=mean_confidence(rec),
        entropy=binary_entropy_score(rec),
        bba=bba_score(rec, config.t_iou),
        ma=ma_score(rec),
        table_count=table_count(rec, config.conf_floor),
    )


def score_all(records: Sequence[PredictionRecord], config: ScoringConfig | None = None) -> list:
    config = config or ScoringConfig()
    seen = set()
    for rec in records:
        if rec.image_id in seen:
            raise ValueError(f"duplicate image_id in prediction set: {rec.image_id!r}")
        seen.add(rec.image_id)
    return [score_record(rec, config) for rec in records]
