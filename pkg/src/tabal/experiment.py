"""Simulator-backed experiment runs and the strategy x budget comparison grid."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from tabal.config import ConfigError, RunConfig
from tabal.loop import Annotator, LoopResult, SelectionRound, evaluate_round, run_loop
from tabal.simulator import SimulatorAdapter, SyntheticImage


def split_holdout(images: Sequence[SyntheticImage], fraction: float, seed: int):
    """Deterministic (pool, test) split keeping ``fraction`` of pages for testing."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"test fraction must lie in (0, 1), got {fraction}")
    ordered = sorted(images, key=lambda im: im.image_id)
    perm = np.random.default_rng([seed, 2]).permutation(len(ordered))
    n_test = max(1, int(round(fraction * len(ordered))))
    test_idx = set(perm[:n_test].tolist())
    pool = [im for i, im in enumerate(ordered) if i not in test_idx]
    test = [im for i, im in enumerate(ordered) if i in test_idx]
    return pool, test


def run_experiment(
    pool: Sequence[SyntheticImage],
    test: Sequence[SyntheticImage],
    config: RunConfig,
    on_round: Callable[[SelectionRound], None] | None = None,
) -> LoopResult:
    """One loop run on simulator-backed data, evaluated on ``test`` every round."""
    for im in list(pool) + list(test):
        if im.hardness is None:
            raise ConfigError(f"image {im.image_id!r} lacks hardness metadata; the simulator cannot run on it")
    if config.strategy == "ma" and not config.sim.emit_masks:
        raise ConfigError("strategy 'ma' needs segmentation masks; this corpus/simulator emits none")
    images = {im.image_id: im for im in pool}
    images.update({im.image_id: im for im in test})
    if len(images) != len(pool) + len(test):
        raise ConfigError("pool and test sets share image ids")
    adapter = SimulatorAdapter(images, config.sim, seed=config.seed)
    ground_truth = {im.image_id: im.gt_tables for im in pool}
    test_gt = {im.image_id: im.gt_tables for im in test}
    test_ids = sorted(test_gt)

    def evaluator(model):
        return evaluate_round(model, adapter, test_ids, test_gt, config.eval)

    return run_loop(
        [im.image_id for im in pool],
        adapter,
        config.strategy,
        config.budget,
        config.mode,
        config.seed,
        annotator=Annotator(ground_truth),
        evaluator=evaluator,
        scoring=config.scoring,
        sampler=config.sampler,
        cold_retrain=config.cold_retrain,
        on_round=on_round,
    )


def metric_by_budget(result: LoopResult, metric: str = "map_50") -> dict:
    """Map total labelled images (the budget axis) to the chosen metric."""
    curve = {}
    if result.initial_report is not None:
        curve[result.budget.initial] = result.initial_report.metric(metric)
    for rnd in result.rounds:
        curve[rnd.cumulative_labeled] = rnd.metrics.metric(metric)
    return curve


@dataclass
class CompareGrid:
    strategies: list
    budgets: list
    seeds: list
    metric: str
    values: dict  # (strategy, budget) -> list of per-seed values

    def mean(self, strategy: str, budget: int) -> float:
        return float(np.mean(self.values[(strategy, budget)]))

    def std(self, strategy: str, budget: int) -> float:
        v = self.values[(strategy, budget)]
        return statistics.stdev(v) if len(v) > 1 else 0.0


def _run_cell(args):
    pool, test, config, budgets = args
    curve = metric_by_budget(run_experiment(pool, test, config), config.eval.primary)
    return {b: value_at_budget(curve, b) for b in budgets}


def value_at_budget(curve: dict, budget: int) -> float:
    """Metric after the last round whose labelled count does not exceed ``budget``.

    Equals ``curve[budget]`` whenever the run reached it; a truncated run
    carries its final value forward.
    """
    reached = [b for b in curve if b <= budget]
    return curve[max(reached)] if reached else float("nan")


def compare(
    pool: Sequence[SyntheticImage],
    test: Sequence[SyntheticImage],
    base: RunConfig,
    strategies: Sequence[str],
    budgets: Sequence[int],
    seeds: Sequence[int],
    workers: int = 1,
) -> CompareGrid:
    """Run every (strategy, budget, seed) cell and collect the primary metric.

    Cells sharing (strategy, seed) are served by one loop run up to the
    largest budget: nothing before the last round depends on B, so each
    budget on the K + i*k grid reads off the same curve it would produce
    alone. Budgets off that grid get their own run.
    """
    if not strategies or not budgets or not seeds:
        raise ConfigError("compare needs at least one strategy, budget and seed")
    strategies = sorted(set(strategies))
    budgets = sorted(set(int(b) for b in budgets))
    seeds = list(seeds)
    K, k = base.budget.initial, base.budget.step
    if budgets[0] < K:
        raise ConfigError(f"budget {budgets[0]} is below the initial labelled size K={K}")
    on_grid = [b for b in budgets if (b - K) % k == 0]
    off_grid = [b for b in budgets if (b - K) % k != 0]

    jobs = []
    keys = []
    for s in strategies:
        for seed in seeds:
            if on_grid:
                cfg = replace(base, strategy=s, seed=seed, budget=replace(base.budget, total=max(on_grid)))
                jobs.append((pool, test, cfg, on_grid))
                keys.append((s, seed))
            for b in off_grid:
                cfg = replace(base, strategy=s, seed=seed, budget=replace(base.budget, total=b))
                jobs.append((pool, test, cfg, [b]))
                keys.append((s, seed))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outputs = list(ex.map(_run_cell, jobs))
    else:
        outputs = [_run_cell(j) for j in jobs]

    values = {(s, b): [] for s in strategies for b in budgets}
    per_seed = {}
    for (s, seed), out in zip(keys, outputs):
        per_seed.setdefault((s, seed), {}).update(out)
    for s in strategies:
        for seed in seeds:
            for b in budgets:
                values[(s, b)].append(per_seed[(s, seed)][b])
    return CompareGrid(strategies, budgets, seeds, base.eval.primary, values)


def format_grid(grid: CompareGrid) -> str:
    head = ["strategy"] + [str(b) for b in grid.budgets]
    rows = [head]
    for s in grid.strategies:
        rows.append([s] + [f"{grid.mean(s, b):.4f}±{grid.std(s, b):.4f}" for b in grid.budgets])
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def grid_csv_rows(grid: CompareGrid) -> list:
    rows = [["strategy", "budget", "mean", "std", "n_seeds"]]
    for s in grid.strategies:
        for b in grid.budgets:
            rows.append([s, str(b), f"{grid.mean(s, b):.6f}", f"{grid.std(s, b):.6f}", str(len(grid.seeds))])
    return rows
