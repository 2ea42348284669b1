"""Single-class detection evaluation: greedy matching, 101-point AP, mAP.

With one class, mAP at an IoU threshold is just the AP at that threshold.
``map_50`` is AP@0.5, and ``map_coco`` is the mean AP over 0.50:0.05:0.95.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from tabal.config import COCO_THRESHOLDS, EvalConfig
from tabal.geometry import BoundingBox, pairwise_iou

RECALL_POINTS = np.arange(101) / 100.0


@dataclass(frozen=True)
class Match:
    pred_index: int
    confidence: float
    gt_index: Optional[int]

    @property
    def is_tp(self) -> bool:
        return self.gt_index is not None


@dataclass
class ImageMatches:
    matches: list
    n_gt: int

    @property
    def tp(self) -> int:
        return sum(m.is_tp for m in self.matches)

    @property
    def fp(self) -> int:
        return len(self.matches) - self.tp

    @property
    def fn(self) -> int:
        return self.n_gt - self.tp


@dataclass
class EvalReport:
    ap_per_threshold: dict
    map_50: float
    map_coco: float
    counts: dict = field(default_factory=dict)

    def metric(self, name: str) -> float:
        return getattr(self, name)


def match_detections(
    preds: Sequence,
    gts: Sequence[BoundingBox],
    iou_thresh: float,
    iou: np.ndarray | None = None,
) -> ImageMatches:
    """Greedy one-to-one matching in descending confidence order.

    Each prediction takes the still-unmatched ground truth with the highest
    IoU, provided that IoU is at least ``iou_thresh``. Confidence ties keep
    input order and IoU ties go to the lower ground-truth index.
    ``iou`` may pass a precomputed (preds x gts) matrix.
    """
    if iou is None:
        iou = pairwise_iou([p.box for p in preds], list(gts))
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    taken = np.zeros(len(gts), dtype=bool)
    matches = []
    for i in order:
        best, best_iou = None, -1.0
        for j in range(len(gts)):
            if taken[j]:
                continue
            v = iou[i, j]
            if v >= iou_thresh and v > best_iou:
                best, best_iou = j, v
        if best is not None:
            taken[best] = True
        matches.append(Match(i, preds[i].confidence, best))
    return ImageMatches(matches, len(gts))


def average_precision(per_image: Mapping[str, ImageMatches]) -> float:
    """101-point interpolated AP over all images' matches.

    Predictions are pooled and ranked by (confidence desc, image_id, index).
    No ground truth at all gives 1.0 when nothing was predicted, else 0.0.
    """
    n_gt = sum(m.n_gt for m in per_image.values())
    pooled = [
        (-m.confidence, image_id, m.pred_index, m.is_tp)
        for image_id, im in per_image.items()
        for m in im.matches
    ]
    if n_gt == 0:
        return 1.0 if not pooled else 0.0
    if not pooled:
        return 0.0
    pooled.sort(key=lambda t: t[:3])
    tp = np.cumsum([t[3] for t in pooled], dtype=float)
    fp = np.arange(1, len(pooled) + 1, dtype=float) - tp
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # monotone envelope: best precision at this recall or beyond
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    interp = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(interp.mean())


def evaluate(
    records: Sequence,
    ground_truth: Mapping[str, Sequence[BoundingBox]],
    config: EvalConfig | None = None,
) -> EvalReport:
    """AP at every configured threshold plus both mAP summaries.

    Images in ``ground_truth`` with no prediction record count as having
    predicted nothing. A prediction for an image outside ``ground_truth`` is
    an error.
    """
    config = config or EvalConfig()
    preds_by_id = {}
    for rec in records:
        if rec.image_id not in ground_truth:
            raise KeyError(f"no ground truth for predicted image {rec.image_id!r}")
        preds_by_id[rec.image_id] = rec.detections
    ious = {}
    for image_id, gts in ground_truth.items():
        dets = preds_by_id.get(image_id, [])
        ious[image_id] = pairwise_iou([d.box for d in dets], list(gts))

    ap = {}
    counts = {}
    for t in config.thresholds:
        per_image = {
            image_id: match_detections(preds_by_id.get(image_id, []), gts, t, ious[image_id])
            for image_id, gts in ground_truth.items()
        }
        ap[t] = average_precision(per_image)
        if t == 0.5:
            counts = {
                "n_images": len(ground_truth),
                "n_gt": sum(m.n_gt for m in per_image.values()),
                "n_pred": sum(len(m.matches) for m in per_image.values()),
                "tp": sum(m.tp for m in per_image.values()),
                "fp": sum(m.fp for m in per_image.values()),
                "fn": sum(m.fn for m in per_image.values()),
            }
    coco = [ap[t] if t in ap else _ap_at(preds_by_id, ground_truth, ious, t) for t in COCO_THRESHOLDS]
    return EvalReport(
        ap_per_threshold=ap,
        map_50=ap[0.5],
        map_coco=float(np.mean(coco)),
        counts=counts,
    )


def _ap_at(preds_by_id, ground_truth, ious, t) -> float:
    per_image = {
        image_id: match_detections(preds_by_id.get(image_id, []), gts, t, ious[image_id])
        for image_id, gts in ground_truth.items()
    }
    return average_precision(per_image)
