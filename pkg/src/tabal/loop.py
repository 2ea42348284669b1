"""Budgeted active-learning loop.

With B_remaining = B - K and a counter b starting at epsilon, each round
selects min(k, B_remaining) candidates while b <= B_remaining and then
advances b by the number picked. A final clamp keeps the total number of newly labelled
images at or below B - K when epsilon < k.
"""

from __future__ import annotations

import abc
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from tabal.config import BudgetConfig, ConfigError, EvalConfig, SamplerConfig, ScoringConfig
from tabal.evaluation import EvalReport, evaluate
from tabal.sampler import CandidateList, build_candidates
from tabal.scoring import score_all

log = logging.getLogger(__name__)


class ModelAdapter(abc.ABC):
    """What the loop needs from a detector: train on ids, infer on ids."""

    @abc.abstractmethod
    def train(self, ids: Sequence[str], warm_start: bool):
        """Train on ``ids`` and return a model handle.

        With ``warm_start`` training continues from the previous state.
        """

    @abc.abstractmethod
    def infer(self, model, ids: Sequence[str]) -> list:
        """Return one PredictionRecord per id, deterministically."""


class AdapterError(RuntimeError):
    pass


class Annotator:
    """Simulated human annotator: returns stored ground truth and meters cost."""

    def __init__(self, ground_truth: Mapping[str, Sequence]):
        self.ground_truth = ground_truth
        self.count = 0
        self._done: set = set()

    def annotate(self, ids: Sequence[str]) -> list:
        missing = [i for i in ids if i not in self.ground_truth]
        if missing:
            raise KeyError(f"no ground truth for image {missing[0]!r}")
        repeated = [i for i in ids if i in self._done]
        if repeated:
            raise ValueError(f"image {repeated[0]!r} was already annotated")
        self._done.update(ids)
        self.count += len(ids)
        return [(i, list(self.ground_truth[i])) for i in ids]


@dataclass
class BudgetState:
    total: int
    initial: int
    step: int
    epsilon: int
    consumed: int
    labeled: set
    new_labeled: list
    unlabeled: set

    @property
    def remaining(self) -> int:
        # B_remaining is never decremented; b is what moves
        return self.total - self.initial

    def check(self, n_dataset: int):
        new = set(self.new_labeled)
        assert not (self.labeled & new or self.labeled & self.unlabeled or new & self.unlabeled)
        assert len(self.labeled) + len(new) + len(self.unlabeled) == n_dataset
        assert len(new) <= self.total - self.initial


@dataclass
class SelectionRound:
    round_index: int
    strategy: str
    picked_ids: list
    cumulative_labeled: int
    annotated: int
    metrics: Optional[EvalReport] = None
    truncated: bool = False


@dataclass
class LoopResult:
    model: object
    rounds: list
    initial_report: Optional[EvalReport]
    budget: BudgetState
    truncated: bool = False
    inference_calls: int = 0
    candidates: list = field(default_factory=list)


def evaluate_round(model, adapter: ModelAdapter, test_ids: Sequence[str], ground_truth: Mapping, config: EvalConfig | None = None) -> EvalReport:
    records = adapter.infer(model, list(test_ids))
    return evaluate(records, {i: ground_truth[i] for i in test_ids}, config)


def run_loop(
    dataset: Sequence[str],
    adapter: ModelAdapter,
    strategy: str,
    budget: BudgetConfig,
    mode: str = "static",
    seed: int = 0,
    *,
    annotator: Annotator,
    evaluator: Callable[[object], EvalReport] | None = None,
    scoring: ScoringConfig | None = None,
    sampler: SamplerConfig | None = None,
    cold_retrain: bool = False,
    on_round: Callable[[SelectionRound], None] | None = None,
) -> LoopResult:
    """Run the active-learning loop and return the final model and every round.

    ``mode="static"`` scores the unlabelled pool once with the seed model
    and walks that single candidate list. ``mode="rescore"`` re-infers and
    rebuilds the list before every round after the first. ``evaluator`` maps
    a model handle to an EvalReport and is called once per round.
    """
    if mode not in ("static", "rescore"):
        raise ConfigError(f"unknown mode {mode!r}")
    ids = sorted(dataset)
    if len(set(ids)) != len(ids):
        raise ValueError("dataset ids must be unique")
    if budget.total > len(ids):
        raise ConfigError(f"budget B={budget.total} exceeds dataset size {len(ids)}")

    rng = np.random.default_rng([seed, 1])
    seed_set = [ids[i] for i in sorted(rng.choice(len(ids), size=budget.initial, replace=False))]
    state = BudgetState(
        total=budget.total,
        initial=budget.initial,
        step=budget.step,
        epsilon=budget.epsilon,
        consumed=budget.epsilon,
        labeled=set(seed_set),
        new_labeled=[],
        unlabeled=set(ids) - set(seed_set),
    )
    annotator.annotate(seed_set)

    model = _call(adapter.train, "initial training", seed_set, False)
    initial_report = evaluator(model) if evaluator else None

    inference_calls = 0

    def candidate_list(model, round_index) -> CandidateList:
        nonlocal inference_calls
        pool = sorted(state.unlabeled)
        records = _call(adapter.infer, f"inference before round {round_index}", model, pool)
        inference_calls += 1
        if strategy == "ma" and records and all(r.segmentation_mask is None for r in records):
            raise ConfigError("strategy 'ma' requires segmentation masks, but the model produced none")
        scores = score_all(records, scoring)
        return build_candidates(strategy, scores, [seed, round_index], sampler)

    candidates = candidate_list(model, 0)
    lists = [candidates]
    remaining_list = list(candidates.ids)

    rounds = []
    truncated = False
    round_index = 0
    while state.consumed <= state.remaining:
        n = min(state.step, state.remaining, state.remaining - len(state.new_labeled))
        if n <= 0:
            break
        round_index += 1
        if mode == "rescore" and round_index > 1:
            candidates = candidate_list(model, round_index - 1)
            lists.append(candidates)
            remaining_list = list(candidates.ids)
        picked = remaining_list[:n]
        if len(picked) < n:
            truncated = True
            log.warning("candidate list exhausted in round %d: %d of %d", round_index, len(picked), n)
        if not picked:
            round_index -= 1
            break
        annotator.annotate(picked)
        state.new_labeled.extend(picked)
        state.unlabeled.difference_update(picked)
        if cold_retrain:
            model = _call(adapter.train, f"training in round {round_index}", list(state.new_labeled), False)
        else:
            model = _call(adapter.train, f"training in round {round_index}", picked, True)
        report = evaluator(model) if evaluator else None
        state.consumed += len(picked)
        remaining_list = remaining_list[len(picked):]
        state.check(len(ids))
        rnd = SelectionRound(
            round_index=round_index,
            strategy=strategy,
            picked_ids=list(picked),
            cumulative_labeled=len(state.labeled) + len(state.new_labeled),
            annotated=len(state.new_labeled),
            metrics=report,
            truncated=len(picked) < n,
        )
        rounds.append(rnd)
        if on_round:
            on_round(rnd)
        if truncated:
            break

    return LoopResult(model, rounds, initial_report, state, truncated, inference_calls, lists)


def _call(fn, context: str, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except Exception as exc:
        raise AdapterError(f"adapter failed during {context}: {exc}") from exc
