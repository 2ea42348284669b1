"""Command-line entry point: ``tabal <command> [flags]``.

Exit codes: 0 success, 2 configuration or usage error, 3 file I/O or
format error, 4 internal error. ``TABAL_OUT_DIR`` and ``TABAL_WORKERS``
override the default output directory and worker count.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from tabal import io as tio
from tabal.config import (
    DEFAULT_EDGES,
    DEFAULT_UNCERTAINTY_THRESHOLD,
    MODES,
    PROFILES,
    STRATEGIES,
    T_IOU_BY_PROFILE,
    BudgetConfig,
    ConfigError,
    EvalConfig,
    RunConfig,
    SamplerConfig,
    ScoringConfig,
    SimConfig,
)
from tabal.evaluation import evaluate
from tabal.experiment import compare, format_grid, grid_csv_rows, metric_by_budget, run_experiment, split_holdout
from tabal.sampler import build_candidates
from tabal.scoring import score_all
from tabal.simulator import generate_corpus

log = logging.getLogger("tabal")

EXIT_CONFIG, EXIT_IO, EXIT_INTERNAL = 2, 3, 4

_edges = ",".join(f"{e:g}" for e in DEFAULT_EDGES)
PAPER_DEFAULTS = (
    f"defaults: uncertainty threshold {DEFAULT_UNCERTAINTY_THRESHOLD:g} (percent); "
    f"confidence bin edges {_edges}; BBA IoU threshold "
    f"{T_IOU_BY_PROFILE['word-like']} (word-like) / {T_IOU_BY_PROFILE['latex-like']} (latex-like); "
    f"table-count confidence floor {ScoringConfig().conf_floor}"
)


class UsageError(Exception):
    pass


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list of {kind.__name__}: {text!r}")

    return parse


def _out_dir() -> Path:
    return Path(os.environ.get("TABAL_OUT_DIR", "."))


def _workers(flag) -> int:
    if flag is not None:
        return flag
    try:
        return int(os.environ.get("TABAL_WORKERS", "1"))
    except ValueError:
        raise ConfigError("TABAL_WORKERS must be an integer")


# -- flag groups ----------------------------------------------------------------


def _add_scoring(p):
    g = p.add_argument_group("scoring")
    g.add_argument("--profile", choices=PROFILES, default=None, help="corpus profile; selects the BBA IoU threshold (default latex-like)")
    g.add_argument(
        "--t-iou",
        type=float,
        default=None,
        help=f"BBA IoU threshold (default {T_IOU_BY_PROFILE['word-like']} word-like, {T_IOU_BY_PROFILE['latex-like']} latex-like)",
    )
    g.add_argument("--conf-floor", type=float, default=None, help=f"table-count confidence floor (default {ScoringConfig().conf_floor})")


def _add_sampler(p):
    g = p.add_argument_group("sampling")
    g.add_argument("--edges", type=_csv_list(float), default=None, help=f"confidence bin edges in percent (default {_edges})")
    g.add_argument("--r-min", type=float, default=None, help="minimum confidence R_min for the rate formula (default: first edge, 40)")
    g.add_argument(
        "--uncertainty-threshold",
        type=float,
        default=None,
        help=f"percent; images at or above are never sampled by 'uncertainty' (default {DEFAULT_UNCERTAINTY_THRESHOLD:g})",
    )


def _add_run(p, strategy=True):
    g = p.add_argument_group("run")
    if strategy:
        g.add_argument("--strategy", choices=STRATEGIES, default=None, help="selection strategy (default tc)")
    g.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    g.add_argument("--config", type=Path, default=None, help="JSON run-config file; explicit flags override it")


def _add_loop(p):
    g = p.add_argument_group("budget and loop")
    g.add_argument("--K", "--initial", dest="initial", type=int, default=None, help=f"initial labelled set size (default {BudgetConfig().initial})")
    g.add_argument("--B", "--budget", dest="total", type=int, default=None, help=f"total annotation budget incl. K (default {BudgetConfig().total})")
    g.add_argument("--k", "--step", dest="step", type=int, default=None, help=f"images per round (default {BudgetConfig().step})")
    g.add_argument("--epsilon", dest="start", type=int, default=None, help="starting budget counter (default: equal to k)")
    g.add_argument("--mode", choices=MODES, default=None, help="static: score the pool once; rescore: rebuild the list every round (default static)")
    g.add_argument("--cold-retrain", action="store_true", default=None, help="retrain from scratch on the loop's picks only, without the seed set")
    g.add_argument("--metric", choices=("map_50", "map_coco"), default=None, help="metric reported as mAP (default map_50)")
    g.add_argument("--test-dataset", type=Path, default=None, help="held-out dataset file (default: split --test-fraction off --dataset)")
    g.add_argument("--test-fraction", type=float, default=0.2, help="held-out fraction when no --test-dataset (default 0.2)")
    s = p.add_argument_group("simulator")
    s.add_argument("--m0", type=float, default=None, help=f"cluster learning-curve half-saturation (default {SimConfig().m0:g})")
    s.add_argument("--layout-m0", type=float, default=None, help=f"multi-table layout half-saturation (default {SimConfig().layout_m0:g})")
    s.add_argument("--no-masks", action="store_true", default=None, help="simulated detector emits no segmentation masks")


def build_config(args) -> RunConfig:
    base = tio.read_config(args.config) if getattr(args, "config", None) else RunConfig()
    profile = getattr(args, "profile", None) or base.sim.profile
    explicit_t_iou = getattr(args, "t_iou", None)
    if explicit_t_iou is not None:
        t_iou = explicit_t_iou
    elif getattr(args, "config", None):
        t_iou = base.scoring.t_iou
    else:
        t_iou = T_IOU_BY_PROFILE[profile]
    conf_floor = _pick(args, "conf_floor", base.scoring.conf_floor)
    scoring = ScoringConfig(t_iou=t_iou, conf_floor=conf_floor)
    sampler = SamplerConfig(
        edges=_pick(args, "edges", base.sampler.edges),
        r_min=_pick(args, "r_min", base.sampler.r_min),
        uncertainty_threshold=_pick(args, "uncertainty_threshold", base.sampler.uncertainty_threshold),
    )
    budget = BudgetConfig(
        initial=_pick(args, "initial", base.budget.initial),
        total=_pick(args, "total", base.budget.total),
        step=_pick(args, "step", base.budget.step),
        start=_pick(args, "start", base.budget.start),
    )
    sim = replace(
        base.sim,
        profile=profile,
        m0=_pick(args, "m0", base.sim.m0),
        layout_m0=_pick(args, "layout_m0", base.sim.layout_m0),
        emit_masks=False if getattr(args, "no_masks", None) else base.sim.emit_masks,
    )
    return RunConfig(
        strategy=_pick(args, "strategy", base.strategy),
        mode=_pick(args, "mode", base.mode),
        seed=_pick(args, "seed", base.seed),
        cold_retrain=_pick(args, "cold_retrain", base.cold_retrain),
        scoring=scoring,
        sampler=sampler,
        budget=budget,
        eval=EvalConfig(base.eval.thresholds, _pick(args, "metric", base.eval.primary)),
        sim=sim,
    )


def _pick(args, name, fallback):
    value = getattr(args, name, None)
    return fallback if value is None else value


# -- commands -------------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    if args.n <= 0:
        raise ConfigError(f"--n must be positive, got {args.n}")
    profile = args.profile or "latex-like"
    cfg = replace(build_config(args).sim, profile=profile)
    images = generate_corpus(profile, args.n, args.seed if args.seed is not None else 0, cfg)
    out = args.out or _out_dir() / f"{profile}-n{args.n}-s{args.seed or 0}.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    tio.write_dataset(images, out)
    print(out)
    return 0


def cmd_score(args) -> int:
    config = build_config(args)
    records = tio.read_predictions(args.predictions)
    scores = score_all(records, config.scoring)
    out = args.out or _out_dir() / "scores.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    tio.write_scores(scores, out)
    print(out)
    return 0


def cmd_select(args) -> int:
    config = build_config(args)
    if args.scores:
        scores = tio.read_scores(args.scores)
    else:
        records = tio.read_predictions(args.predictions)
        if config.strategy == "ma" and records and all(r.segmentation_mask is None for r in records):
            raise ConfigError("strategy 'ma' requires segmentation masks; the prediction file has none")
        scores = score_all(records, config.scoring)
    cands = build_candidates(config.strategy, scores, config.seed, config.sampler)
    if args.limit is not None:
        cands = replace(cands, entries=cands.entries[: args.limit])
    out = args.out or _out_dir() / f"candidates-{config.strategy}.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    tio.write_candidates(cands, out)
    print(out)
    return 0


def cmd_eval(args) -> int:
    config = build_config(args)
    dataset = tio.read_dataset(args.dataset)
    records = tio.read_predictions(args.predictions)
    gt = {im.image_id: im.gt_tables for im in dataset}
    missing = [r.image_id for r in records if r.image_id not in gt]
    if missing:
        raise ConfigError(f"prediction for image {missing[0]!r} has no entry in the dataset")
    report = evaluate(records, gt, config.eval)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        tio.write_eval_report(report, args.out)
    print(f"map_50={report.map_50:.6f} map_coco={report.map_coco:.6f}")
    return 0


def _load_split(args, seed):
    dataset = tio.read_dataset(args.dataset)
    if args.test_dataset:
        return dataset, tio.read_dataset(args.test_dataset)
    return split_holdout(dataset, args.test_fraction, seed)


def cmd_loop(args) -> int:
    config = build_config(args)
    pool, test = _load_split(args, config.seed)
    out_dir = args.out_dir or _out_dir() / f"loop-{config.strategy}-s{config.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = out_dir / "reports"
    if reports.exists():
        shutil.rmtree(reports)
    reports.mkdir()
    round_log = out_dir / "round_log.jsonl"
    if round_log.exists():
        round_log.unlink()
    tio.write_config(config, out_dir / "config.json")

    def on_round(rnd):
        tio.append_round_log(rnd, round_log)
        tio.write_eval_report(rnd.metrics, reports / f"round-{rnd.round_index:03d}.json")
        log.info("round %d: %d labelled, mAP %.4f", rnd.round_index, rnd.cumulative_labeled, rnd.metrics.metric(config.eval.primary))

    result = run_experiment(pool, test, config, on_round=on_round)
    tio.write_eval_report(result.initial_report, reports / "round-000.json")

    rows = [["strategy", "budget", "round", "map_50", "map_coco"]]
    rows.append([config.strategy, str(config.budget.initial), "0", f"{result.initial_report.map_50:.6f}", f"{result.initial_report.map_coco:.6f}"])
    for rnd in result.rounds:
        rows.append([config.strategy, str(rnd.cumulative_labeled), str(rnd.round_index), f"{rnd.metrics.map_50:.6f}", f"{rnd.metrics.map_coco:.6f}"])
    _write_csv(rows, out_dir / "summary.csv")
    curve = metric_by_budget(result, config.eval.primary)
    text = [f"strategy {config.strategy}  mode {config.mode}  seed {config.seed}  metric {config.eval.primary}"]
    text += [f"{b:>8d}  {v:.4f}" for b, v in sorted(curve.items())]
    if result.truncated:
        text.append("candidate list exhausted before the budget was spent (truncated)")
    (out_dir / "summary.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
    print(f"{len(result.rounds)} rounds written to {round_log}")
    return 0


def cmd_compare(args) -> int:
    config = build_config(args)
    pool, test = _load_split(args, args.split_seed)
    grid = compare(pool, test, config, args.strategies, args.budgets, args.seeds, _workers(args.workers))
    out_dir = args.out or _out_dir() / "compare"
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(grid_csv_rows(grid), out_dir / "summary.csv")
    text = format_grid(grid)
    (out_dir / "grid.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _write_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabal",
        description="Active-learning sample selection for table detection. " + PAPER_DEFAULTS,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-corpus", help="generate a synthetic dataset file", description=PAPER_DEFAULTS)
    p.add_argument("--n", type=int, required=True, help="number of pages")
    p.add_argument("--out", type=Path, default=None)
    _add_run(p, strategy=False)
    _add_scoring(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("score", help="score a prediction file", description=PAPER_DEFAULTS)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    _add_scoring(p)
    p.add_argument("--config", type=Path, default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="build a candidate list from predictions or scores", description=PAPER_DEFAULTS)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--predictions", type=Path)
    src.add_argument("--scores", type=Path)
    p.add_argument("--limit", type=int, default=None, help="keep only the first N candidates")
    p.add_argument("--out", type=Path, default=None)
    _add_run(p)
    _add_scoring(p)
    _add_sampler(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="evaluate predictions against a dataset", description=PAPER_DEFAULTS)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--config", type=Path, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loop", help="run the active-learning loop on a simulator-backed dataset", description=PAPER_DEFAULTS)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=None)
    _add_run(p)
    _add_scoring(p)
    _add_sampler(p)
    _add_loop(p)
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("compare", help="strategy x budget x seed grid", description=PAPER_DEFAULTS)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--strategies", type=_csv_list(str), default=["random", "uncertainty", "bba", "ma", "tc"])
    p.add_argument("--budgets", type=_csv_list(int), required=True)
    p.add_argument("--seeds", type=_csv_list(int), default=[0])
    p.add_argument("--split-seed", type=int, default=0, help="seed of the held-out split (default 0)")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes (default 1 or $TABAL_WORKERS)")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    _add_run(p, strategy=False)
    _add_scoring(p)
    _add_sampler(p)
    _add_loop(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "strategies", None):
        bad = [s for s in args.strategies if s not in STRATEGIES]
        if bad:
            parser.error(f"unknown strategy {bad[0]!r}; choose from {', '.join(STRATEGIES)}")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tabal: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (tio.FormatError, OSError) as exc:
        print(f"tabal: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"tabal: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
