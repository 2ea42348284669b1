from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tabal.config import DEFAULT_EDGES, STRATEGIES, ConfigError, SamplerConfig
from tabal.sampler import (
    CandidateList,
    ConfidenceBin,
    bin_by_confidence,
    build_candidates,
    excluded_ids,
    random_baseline,
    rank_by_score,
    sample_uncertainty,
    sampling_rate,
    table_count_weights,
    weight_by_table_count,
)
from tabal.scoring import ImageScore


def score(i, conf=0.5, bba=0.0, ma=0.0, tc=1, entropy=0.0):
    return ImageScore(f"img{i:03d}", conf, entropy, bba, ma, tc)


scores_st = st.lists(
    st.tuples(st.one_of(st.none(), st.floats(0, 1)), st.floats(0, 1), st.integers(0, 5)),
    max_size=40,
).map(lambda rows: [ImageScore(f"img{i:03d}", c, b, b, b, t) for i, (c, b, t) in enumerate(rows)])


def test_published_rates():
    rates = [sampling_rate(lo, 40) for lo in DEFAULT_EDGES[:-1]]
    assert rates == [100, 90, 80, 70, 60, 50]


@pytest.mark.parametrize("low,expected", [(40, 100), (70, 70), (150, 0)])
def test_sampling_rate(low, expected):
    assert sampling_rate(low, 40) == expected


def test_sampling_rate_below_floor():
    with pytest.raises(ValueError):
        sampling_rate(30, 40)


@given(st.floats(40, 500), st.floats(40, 500))
def test_sampling_rate_non_increasing(a, b):
    lo, hi = sorted((a, b))
    assert sampling_rate(hi, 40) <= sampling_rate(lo, 40)


def test_binning_examples():
    bins = bin_by_confidence([score(0, 0.55), score(1, 0.97), score(2, 0.50), score(3, None), score(4, 0.1)])
    assert [(b.low, b.high) for b in bins] == list(zip(DEFAULT_EDGES, DEFAULT_EDGES[1:]))
    by_low = {b.low: b.members for b in bins}
    assert by_low[50.0] == ["img000", "img002"]  # 50 belongs to [50, 60)
    assert by_low[40.0] == ["img003", "img004"]
    assert all("img001" not in b.members for b in bins)
    assert excluded_ids([score(1, 0.97), score(2, 0.95), score(3, 0.949)], 95) == ["img001", "img002"]


def test_binning_errors():
    with pytest.raises(ValueError):
        bin_by_confidence([], edges=[40])
    with pytest.raises(ValueError):
        bin_by_confidence([], edges=[40, 30, 50])
    with pytest.raises(ConfigError):
        SamplerConfig(edges=(40, 50), uncertainty_threshold=95)


@given(scores_st)
def test_bins_partition_input(scores):
    bins = bin_by_confidence(scores)
    members = [m for b in bins for m in b.members]
    assert len(members) == len(set(members))
    assert set(members) | set(excluded_ids(scores, 95)) == {s.image_id for s in scores}
    assert not set(members) & set(excluded_ids(scores, 95))


def test_sample_uncertainty_counts():
    b = ConfidenceBin(50, 60, [f"m{i}" for i in range(23)], 90)
    assert len(sample_uncertainty([b], 0)) == 21
    assert len(sample_uncertainty([ConfidenceBin(50, 60, ["a", "b"], 0)], 0)) == 0
    a = sample_uncertainty([b], 7)
    assert a == sample_uncertainty([b], 7)


def test_uncertainty_lowest_bin_first():
    scores = [score(i, c) for i, c in enumerate([0.92, 0.45, 0.61, 0.3])]
    cl = build_candidates("uncertainty", scores, 0)
    assert cl.ids == ["img001", "img003", "img002", "img000"]
    assert [w for _, w in cl.entries] == [100, 100, 80, 50]


@given(scores_st, st.integers(0, 2**32 - 1))
def test_uncertainty_never_picks_confident(scores, seed):
    cl = build_candidates("uncertainty", scores, seed)
    conf = {s.image_id: s.mean_confidence for s in scores}
    assert all(conf[i] is None or conf[i] < 0.95 for i in cl.ids)


def test_rank_by_score():
    scores = [score(0, bba=0.0), score(1, bba=0.5), score(2, bba=1.0)]
    assert rank_by_score(scores, "bba").ids == ["img002", "img001", "img000"]
    tied = [score(i) for i in range(10)]
    assert rank_by_score(tied, "bba", 3).ids == rank_by_score(tied, "bba", 3).ids
    assert rank_by_score(tied, "bba", 3).ids != rank_by_score(tied, "bba", 4).ids
    partial = [score(0, ma=0.2), score(1, ma=None), score(2, ma=0.1)]
    assert rank_by_score(partial, "ma").ids[-1] == "img001"
    with pytest.raises(ValueError):
        rank_by_score(scores, "tc")


def test_table_count_weights():
    w = table_count_weights([score(0, tc=1), score(1, tc=2), score(2, tc=3)])
    assert w == {"img001": pytest.approx(2 / 5), "img002": pytest.approx(3 / 5)}
    assert table_count_weights([score(i, tc=1) for i in range(4)]) == {}


def test_tc_all_single_is_random_order():
    scores = [score(i, tc=1) for i in range(6)]
    cl = weight_by_table_count(scores, 5)
    assert sorted(cl.ids) == [s.image_id for s in scores]
    assert all(w == 0.0 for _, w in cl.entries)


def test_tc_multi_first():
    scores = [score(i, tc=t) for i, t in enumerate([1, 3, 0, 2, 1])]
    cl = weight_by_table_count(scores, 1)
    assert set(cl.ids[:2]) == {"img001", "img003"}


def test_tc_equal_counts_uniform_first():
    ids = [score(i, tc=2) for i in range(5)]
    firsts = Counter(weight_by_table_count(ids, s).ids[0] for s in range(1000))
    observed = np.array([firsts[f"img{i:03d}"] for i in range(5)])
    chi2 = float(((observed - 200) ** 2 / 200).sum())
    assert chi2 < 13.277  # chi-square 0.99 quantile, 4 dof


def test_tc_first_position_proportional():
    scores = [score(0, tc=2), score(1, tc=3), score(2, tc=5)]
    firsts = Counter(weight_by_table_count(scores, s).ids[0] for s in range(4000))
    expected = np.array([0.2, 0.3, 0.5]) * 4000
    observed = np.array([firsts[f"img{i:03d}"] for i in range(3)])
    assert float(((observed - expected) ** 2 / expected).sum()) < 9.21  # 2 dof


def test_random_baseline():
    assert len(random_baseline([], 0)) == 0
    ids = [f"x{i}" for i in range(5)]
    assert random_baseline(ids, 9).ids == random_baseline(list(reversed(ids)), 9).ids
    firsts = Counter(random_baseline(ids, s).ids[0] for s in range(10_000))
    for i in ids:
        assert abs(firsts[i] / 10_000 - 0.2) <= 0.02


def test_candidate_list_rejects_duplicates():
    with pytest.raises(ValueError):
        CandidateList("random", [("a", 1.0), ("a", 1.0)], 0)


@pytest.mark.parametrize("strategy", STRATEGIES)
@given(scores=scores_st, seed=st.integers(0, 2**32 - 1))
def test_candidates_are_subset_permutation_and_deterministic(strategy, scores, seed):
    a = build_candidates(strategy, scores, seed)
    b = build_candidates(strategy, scores, seed)
    assert a == b
    assert len(set(a.ids)) == len(a.ids)
    assert set(a.ids) <= {s.image_id for s in scores}
    if strategy != "uncertainty":
        assert len(a) == len(scores)


def test_unknown_strategy():
    with pytest.raises(ValueError):
        build_candidates("nope", [], 0)


def test_ceil_selects_at_least_one():
    b = ConfidenceBin(90, 95, ["only"], 50)
    assert sample_uncertainty([b], 0).ids == ["only"]
