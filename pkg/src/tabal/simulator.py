"""Synthetic table corpora and a learning-curve detector simulator.

The simulated detector knows nothing about pixels. Each page belongs to a
latent style cluster, and the detector's competence on a cluster grows
with the number of labelled table instances it has seen from that
cluster: competence = m / (m + m0). Competence then controls:

* the probability that each ground-truth table is detected,
* the positional jitter of emitted boxes, (1 - competence) * jitter_scale,
* the centre of the confidence distribution,
* on overlap-prone pages, the chance of an extra overlapping duplicate box,
* the jitter of the predicted segmentation mask.

A second curve with the same form tracks the multi-table layout skill,
learned from labelled tables on multi-table pages. Until it saturates,
adjacent detected tables on a page tend to fuse into one box.

Cluster-local competence is a modelling assumption. Without per-cluster
heterogeneity every selection strategy would tie.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from tabal.config import SimConfig
from tabal.geometry import BoundingBox, rasterize_boxes
from tabal.loop import ModelAdapter
from tabal.scoring import Detection, PredictionRecord

_PREFIX = {"latex-like": "latex", "word-like": "word"}


@dataclass(frozen=True)
class Hardness:
    style_cluster: int
    overlap_prone: bool
    table_count: int


@dataclass
class SyntheticImage:
    """A page with ground-truth table boxes; ``hardness`` is simulator-only metadata."""

    image_id: str
    width: int
    height: int
    gt_tables: list
    hardness: Optional[Hardness] = None

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"{self.image_id}: image dimensions must be positive")
        for b in self.gt_tables:
            if b.x_min < 0 or b.y_min < 0 or b.x_max > self.width or b.y_max > self.height:
                raise ValueError(f"{self.image_id}: box {b.as_list()} outside the image")
        if self.hardness is not None and self.hardness.table_count != len(self.gt_tables):
            raise ValueError(
                f"{self.image_id}: hardness.table_count={self.hardness.table_count} "
                f"but {len(self.gt_tables)} boxes"
            )


def cluster_weights(n_clusters: int, skew: float) -> np.ndarray:
    w = (np.arange(n_clusters) + 1.0) ** -skew
    return w / w.sum()


def cluster_multi_rates(n_clusters: int, base_rate: float) -> np.ndarray:
    # rarer clusters carry more multi-table pages (multi-column layouts)
    if n_clusters == 1:
        return np.array([base_rate])
    ramp = 0.5 + np.arange(n_clusters) / (n_clusters - 1)
    return np.clip(base_rate * ramp, 0.0, 0.95)


def generate_corpus(profile: str, n_images: int, seed: int, config: SimConfig | None = None) -> list:
    """Seeded corpus of ``n_images`` pages, each holding at least one table.

    LaTeX-like pages use few style clusters and regular table shapes with
    many multi-table pages. Word-like pages use more clusters, irregular
    aspect ratios and fewer multi-table pages.
    """
    if n_images <= 0:
        raise ValueError(f"n_images must be positive, got {n_images}")
    config = replace(config or SimConfig(profile=profile), profile=profile)
    n_clusters = config.resolved("n_clusters")
    multi_rate = config.resolved("multi_table_rate")
    overlap_rate = config.resolved("overlap_prone_rate")
    aspect_jitter = config.resolved("aspect_jitter")
    W, H = config.page_width, config.page_height

    rng = np.random.default_rng([seed, 0x7AB1E])
    weights = cluster_weights(n_clusters, config.cluster_skew)
    multi = cluster_multi_rates(n_clusters, multi_rate)
    # per-cluster typical table width as a fraction of the page
    style_width = rng.uniform(0.45, 0.9, size=n_clusters)

    images = []
    prefix = _PREFIX[profile]
    for i in range(n_images):
        c = int(rng.choice(n_clusters, p=weights))
        if rng.random() < multi[c]:
            n_tables = int(rng.integers(2, config.max_tables + 1))
        else:
            n_tables = 1
        overlap_prone = bool(rng.random() < overlap_rate)
        slot_h = H / n_tables
        boxes = []
        for t in range(n_tables):
            frac_w = np.clip(style_width[c] * (1.0 + aspect_jitter * rng.standard_normal()), 0.2, 0.95)
            w = max(4, int(round(W * frac_w)))
            h = max(4, int(round(slot_h * rng.uniform(0.45, 0.85))))
            x0 = int(rng.integers(0, W - w + 1))
            y_lo = int(round(t * slot_h))
            y_hi = int(round((t + 1) * slot_h)) - h
            y0 = int(rng.integers(y_lo, max(y_lo, y_hi) + 1))
            boxes.append(BoundingBox(x0, y0, x0 + w, min(y0 + h, H)))
        images.append(
            SyntheticImage(
                image_id=f"{prefix}-s{seed}-{i:06d}",
                width=W,
                height=H,
                gt_tables=boxes,
                hardness=Hardness(c, overlap_prone, n_tables),
            )
        )
    return images


@dataclass(frozen=True)
class SimDetectorState:
    """Labelled table-instance counts per style cluster, plus the multi-table layout count.

    ``layout_count`` is the number of labelled tables that sat on multi-table
    pages. It drives a second learning curve, the skill of telling adjacent
    tables apart.
    """

    counts: tuple
    m0: float = 8.0
    layout_count: float = 0.0
    layout_m0: float = 50.0

    @classmethod
    def empty(cls, n_clusters: int, m0: float = 8.0, layout_m0: float = 50.0) -> "SimDetectorState":
        return cls(tuple(0.0 for _ in range(n_clusters)), m0, 0.0, layout_m0)

    def competence(self, cluster: int) -> float:
        if cluster >= len(self.counts):
            return 0.0
        return competence(self.counts[cluster], self.m0)

    @property
    def layout_competence(self) -> float:
        return competence(self.layout_count, self.layout_m0)


def competence(m: float, m0: float) -> float:
    """Saturating learning curve m / (m + m0), with 0 for m = 0."""
    if m <= 0:
        return 0.0
    return m / (m + m0)


def sim_train(state: SimDetectorState, labeled: Sequence[SyntheticImage], warm_start: bool) -> SimDetectorState:
    counts = list(state.counts) if warm_start else [0.0] * len(state.counts)
    layout = state.layout_count if warm_start else 0.0
    for img in labeled:
        if img.hardness is None:
            raise ValueError(f"{img.image_id}: simulator needs hardness metadata")
        c = img.hardness.style_cluster
        if c >= len(counts):
            counts.extend([0.0] * (c + 1 - len(counts)))
        counts[c] += len(img.gt_tables)
        if len(img.gt_tables) > 1:
            layout += len(img.gt_tables)
    return SimDetectorState(tuple(counts), state.m0, layout, state.layout_m0)


def _image_rng(image_id: str, seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(image_id.encode("utf-8"))])


def _jitter(box: BoundingBox, z: np.ndarray, sd: float, width: int, height: int) -> BoundingBox:
    w = box.x_max - box.x_min
    h = box.y_max - box.y_min
    x0 = box.x_min + z[0] * sd * w
    y0 = box.y_min + z[1] * sd * h
    x1 = box.x_max + z[2] * sd * w
    y1 = box.y_max + z[3] * sd * h
    x0, x1 = sorted((x0, x1))
    y0, y1 = sorted((y0, y1))
    return BoundingBox(x0, y0, x1, y1).clip(width, height)


@dataclass
class SimOutput:
    record: PredictionRecord
    n_duplicates: int


def simulate(state: SimDetectorState, image: SyntheticImage, seed: int, config: SimConfig | None = None) -> SimOutput:
    """Draw one prediction record, also reporting how many duplicates were injected.

    Random draws are consumed in a fixed pattern per image, so different
    detector states share the same noise (common random numbers) and
    outcomes are monotone in competence.
    """
    config = config or SimConfig()
    if image.hardness is None:
        raise ValueError(f"{image.image_id}: simulator needs hardness metadata")
    rng = _image_rng(image.image_id, seed)
    comp = state.competence(image.hardness.style_cluster)
    sd = (1.0 - comp) * config.jitter_scale
    W, H = image.width, image.height

    emitted = []
    seg_boxes = []
    for gt in image.gt_tables:
        u_emit = rng.random()
        z_box = rng.standard_normal(4)
        z_conf = rng.standard_normal()
        z_seg = rng.standard_normal(4)
        seg_boxes.append(_jitter(gt, z_seg, sd, W, H))
        if u_emit < comp:
            conf = float(np.clip(comp + config.conf_noise * (1.0 - comp) * z_conf, 0.0, 1.0))
            emitted.append(Detection(_jitter(gt, z_box, sd, W, H), conf))
        else:
            emitted.append(None)

    # multi-table layouts: adjacent detected tables fuse into one box
    # until the layout skill is learned
    u_merge = rng.random(max(len(image.gt_tables) - 1, 0))
    p_merge = 1.0 - state.layout_competence
    detections = []
    for t, det in enumerate(emitted):
        if det is None:
            continue
        prev = detections[-1] if detections and emitted[t - 1] is not None else None
        if prev is not None and u_merge[t - 1] < p_merge:
            a, b = prev.box, det.box
            fused = BoundingBox(min(a.x_min, b.x_min), min(a.y_min, b.y_min), max(a.x_max, b.x_max), max(a.y_max, b.y_max))
            detections[-1] = Detection(fused, 0.5 * (prev.confidence + det.confidence))
        else:
            detections.append(det)

    u_dup = rng.random()
    dup_target = int(rng.integers(len(image.gt_tables))) if image.gt_tables else 0
    z_dup = rng.standard_normal(4)
    z_dup_conf = rng.standard_normal()
    n_dup = 0
    if image.hardness.overlap_prone and image.gt_tables and comp > 0 and u_dup < 1.0 - comp:
        gt = image.gt_tables[dup_target]
        # shifted copy: overlaps the original but is a distinct box
        w = gt.x_max - gt.x_min
        h = gt.y_max - gt.y_min
        shifted = BoundingBox(gt.x_min + 0.25 * w, gt.y_min + 0.2 * h, gt.x_max + 0.25 * w, gt.y_max + 0.2 * h)
        box = _jitter(shifted.clip(W, H), z_dup, sd, W, H)
        conf = float(np.clip(0.8 * comp + config.conf_noise * (1.0 - comp) * z_dup_conf, 0.0, 1.0))
        detections.append(Detection(box, conf))
        n_dup = 1

    mask = None
    if config.emit_masks:
        # an untrained detector segments nothing
        mask = rasterize_boxes(seg_boxes if comp > 0 else [], W, H)
    record = PredictionRecord(image.image_id, W, H, detections, mask)
    return SimOutput(record, n_dup)


def sim_infer(state: SimDetectorState, image: SyntheticImage, seed: int, config: SimConfig | None = None) -> PredictionRecord:
    return simulate(state, image, seed, config).record


class SimulatorAdapter(ModelAdapter):
    """Model adapter backed by the detector simulator.

    ``train`` with ``warm_start`` adds the given images to the current state.
    Without it, training starts again from an empty state. The returned
    state is the model handle.
    """

    def __init__(self, images: Sequence[SyntheticImage] | Mapping[str, SyntheticImage], config: SimConfig | None = None, seed: int = 0):
        self.config = config or SimConfig()
        if isinstance(images, Mapping):
            self.images = dict(images)
        else:
            self.images = {img.image_id: img for img in images}
        n_clusters = 1 + max(
            (img.hardness.style_cluster for img in self.images.values() if img.hardness is not None),
            default=0,
        )
        self.seed = seed
        self.state = SimDetectorState.empty(n_clusters, self.config.m0, self.config.layout_m0)
        self.provides_masks = self.config.emit_masks

    def train(self, ids: Sequence[str], warm_start: bool) -> SimDetectorState:
        self.state = sim_train(self.state, [self.images[i] for i in ids], warm_start)
        return self.state

    def infer(self, model: SimDetectorState, ids: Sequence[str]) -> list:
        return [sim_infer(model, self.images[i], self.seed, self.config) for i in ids]
