"""Candidate-list construction for each selection strategy.

Every function takes an explicit seed and owns its generator, so the same
(input, seed) pair always yields the same list regardless of call order.
Ties are broken by a seeded shuffle of the lexicographically sorted ids,
which keeps results independent of ingestion order.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from tabal.config import STRATEGIES, SamplerConfig


@dataclass
class ConfidenceBin:
    low: float
    high: float
    members: list = field(default_factory=list)
    rate: float = 0.0


@dataclass
class CandidateList:
    strategy: str
    entries: list  # (image_id, weight) pairs, highest priority first
    seed: int

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        ids = [i for i, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate list contains duplicate image ids")

    @property
    def ids(self) -> list:
        return [i for i, _ in self.entries]

    def __len__(self):
        return len(self.entries)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _seed_value(seed) -> int:
    return int(seed) if np.isscalar(seed) else int(seed[0])


def sampling_rate(bin_low: float, r_min: float) -> float:
    """Percentage of a bin to sample: max(0, 100 - (bin_low - r_min))."""
    if bin_low < r_min:
        raise ValueError(f"bin lower bound {bin_low} is below the minimum confidence {r_min}")
    return max(0.0, 100.0 - (bin_low - r_min))


def bin_by_confidence(
    scores: Sequence,
    edges: Sequence[float] = SamplerConfig().edges,
    uncertainty_threshold: float = SamplerConfig().uncertainty_threshold,
    r_min: float | None = None,
) -> list:
    """Split images into half-open confidence bins [edges[j], edges[j+1]).

    Images at or above ``uncertainty_threshold`` (percent) are left out.
    Images below the first edge, and images with no detections at all, go
    into the first bin. Each bin's rate comes from :func:`sampling_rate`.
    """
    edges = [float(e) for e in edges]
    if len(edges) < 2:
        raise ValueError("at least two bin edges are required")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bin edges must be strictly increasing: {edges}")
    if not edges[0] < uncertainty_threshold <= edges[-1]:
        raise ValueError(
            f"uncertainty_threshold {uncertainty_threshold} must lie in ({edges[0]}, {edges[-1]}]"
        )
    r_min = edges[0] if r_min is None else r_min
    bins = [
        ConfidenceBin(low, high, [], sampling_rate(low, r_min))
        for low, high in zip(edges, edges[1:])
        if low < uncertainty_threshold
    ]
    for s in scores:
        if s.mean_confidence is None:
            bins[0].members.append(s.image_id)
            continue
        pct = s.mean_confidence * 100.0
        if pct >= uncertainty_threshold:
            continue
        j = max(bisect.bisect_right(edges, pct) - 1, 0)
        bins[j].members.append(s.image_id)
    return bins


def excluded_ids(scores: Sequence, uncertainty_threshold: float) -> list:
    return [
        s.image_id
        for s in scores
        if s.mean_confidence is not None and s.mean_confidence * 100.0 >= uncertainty_threshold
    ]


def sample_uncertainty(bins: Sequence[ConfidenceBin], seed=0) -> CandidateList:
    """Union of per-bin draws without replacement, lowest-confidence bin first."""
    rng = _rng(seed)
    entries = []
    for b in sorted(bins, key=lambda b: b.low):
        members = sorted(b.members)
        n = math.ceil(b.rate * len(members) / 100.0)
        if n == 0:
            continue
        picked = rng.choice(len(members), size=min(n, len(members)), replace=False)
        entries.extend((members[i], float(b.rate)) for i in picked)
    return CandidateList("uncertainty", entries, _seed_value(seed))


def _score_of(score, strategy: str):
    if strategy == "bba":
        return score.bba
    if strategy == "ma":
        return score.ma
    if strategy == "entropy":
        return score.entropy
    raise ValueError(f"rank_by_score does not handle strategy {strategy!r}")


def rank_by_score(scores: Sequence, strategy: str, seed=0) -> CandidateList:
    """Highest score first; absent scores (MA without a mask) go last."""
    if strategy not in ("bba", "ma", "entropy"):
        raise ValueError(f"rank_by_score handles bba, ma and entropy, not {strategy!r}")
    by_id = {s.image_id: s for s in scores}
    order = sorted(by_id)
    perm = _rng(seed).permutation(len(order))
    shuffled = [order[i] for i in perm]

    def key(image_id):
        value = _score_of(by_id[image_id], strategy)
        return (1, 0.0) if value is None else (0, -value)

    ranked = sorted(shuffled, key=key)
    entries = []
    for image_id in ranked:
        value = _score_of(by_id[image_id], strategy)
        entries.append((image_id, 0.0 if value is None else float(value)))
    return CandidateList(strategy, entries, _seed_value(seed))


def table_count_weights(scores: Sequence) -> dict:
    """Normalised sampling weights for images with more than one table."""
    eligible = {s.image_id: s.table_count for s in scores if s.table_count > 1}
    total = sum(eligible.values())
    return {i: c / total for i, c in eligible.items()}


def weight_by_table_count(scores: Sequence, seed=0) -> CandidateList:
    """Multi-table images drawn proportionally to their count, then the rest at random."""
    rng = _rng(seed)
    weights = table_count_weights(scores)
    eligible = sorted(weights)
    entries = []
    if eligible:
        p = np.array([weights[i] for i in eligible])
        order = rng.choice(len(eligible), size=len(eligible), replace=False, p=p / p.sum())
        entries.extend((eligible[i], weights[eligible[i]]) for i in order)
    rest = sorted(s.image_id for s in scores if s.image_id not in weights)
    entries.extend((rest[i], 0.0) for i in rng.permutation(len(rest)))
    return CandidateList("tc", entries, _seed_value(seed))


def random_baseline(image_ids: Iterable[str], seed=0) -> CandidateList:
    ids = sorted(set(image_ids))
    perm = _rng(seed).permutation(len(ids))
    return CandidateList("random", [(ids[i], 1.0) for i in perm], _seed_value(seed))


def build_candidates(
    strategy: str,
    scores: Sequence,
    seed=0,
    sampler: SamplerConfig | None = None,
) -> CandidateList:
    """Dispatch to the strategy's candidate builder."""
    sampler = sampler or SamplerConfig()
    if strategy == "random":
        return random_baseline([s.image_id for s in scores], seed)
    if strategy == "uncertainty":
        bins = bin_by_confidence(
            scores, sampler.edges, sampler.uncertainty_threshold, sampler.effective_r_min
        )
        return sample_uncertainty(bins, seed)
    if strategy == "tc":
        return weight_by_table_count(scores, seed)
    if strategy in ("bba", "ma", "entropy"):
        return rank_by_score(scores, strategy, seed)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
