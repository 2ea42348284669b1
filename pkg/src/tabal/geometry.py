"""Axis-aligned boxes, binary masks and their IoU."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"box has min > max: {coords}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def clip(self, width: float, height: float) -> "BoundingBox":
        x0 = min(max(self.x_min, 0.0), width)
        y0 = min(max(self.y_min, 0.0), height)
        x1 = min(max(self.x_max, 0.0), width)
        y1 = min(max(self.y_max, 0.0), height)
        return BoundingBox(x0, y0, x1, y1)


class BinaryMask:
    """A width x height bit mask, stored as a (height, width) bool array.

    Row-major: ``data[y, x]`` is the pixel whose centre sits at
    ``(x + 0.5, y + 0.5)``.
    """

    __slots__ = ("width", "height", "data")

    def __init__(self, width: int, height: int, data=None):
        if width <= 0 or height <= 0:
            raise ValueError(f"mask dimensions must be positive, got {width}x{height}")
        self.width = int(width)
        self.height = int(height)
        if data is None:
            self.data = np.zeros((self.height, self.width), dtype=bool)
        else:
            arr = np.asarray(data, dtype=bool)
            if arr.size != self.width * self.height:
                raise ValueError(
                    f"mask data has {arr.size} bits, expected {self.width}x{self.height}"
                )
            self.data = arr.reshape(self.height, self.width)

    @property
    def shape(self) -> tuple:
        return (self.width, self.height)

    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, {self.count()} set)"


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def pairwise_iou(boxes: Sequence[BoundingBox], others: Sequence[BoundingBox] | None = None) -> np.ndarray:
    """IoU matrix between two box lists (or a list and itself).

    Same arithmetic as :func:`box_iou`, vectorised.
    """
    a = _as_array(boxes)
    b = a if others is None else _as_array(others)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return iou


def _as_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 4))
    return np.array([(b.x_min, b.y_min, b.x_max, b.y_max) for b in boxes], dtype=float)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Bit-count IoU. Two empty masks count as a perfect match (1.0)."""
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    union = int(np.count_nonzero(a.data | b.data))
    if union == 0:
        return 1.0
    inter = int(np.count_nonzero(a.data & b.data))
    return inter / union


def rasterize_boxes(boxes: Iterable[BoundingBox], width: int, height: int) -> BinaryMask:
    """Set every pixel whose centre lies inside (or on the edge of) any box."""
    mask = BinaryMask(width, height)
    for box in boxes:
        # pixel c is covered iff x_min <= c + 0.5 <= x_max
        c0 = max(math.ceil(box.x_min - 0.5), 0)
        c1 = min(math.floor(box.x_max - 0.5), width - 1)
        r0 = max(math.ceil(box.y_min - 0.5), 0)
        r1 = min(math.floor(box.y_max - 0.5), height - 1)
        if c0 <= c1 and r0 <= r1:
            mask.data[r0 : r1 + 1, c0 : c1 + 1] = True
    return mask
