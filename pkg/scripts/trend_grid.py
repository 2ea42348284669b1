"""Strategy x budget grid on a simulated LaTeX-like corpus.

Writes grid.txt and summary.csv to the output directory and prints the grid.

    python3 scripts/trend_grid.py --out results/trend --seeds 0,1,2,3,4
"""

import argparse
import csv
import time
from dataclasses import replace
from pathlib import Path

from tabal.config import STRATEGIES, BudgetConfig, RunConfig, SimConfig
from tabal.experiment import compare, format_grid, grid_csv_rows
from tabal.simulator import generate_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--profile", default="latex-like")
    ap.add_argument("--pool-size", type=int, default=2000)
    ap.add_argument("--test-size", type=int, default=400)
    ap.add_argument("--corpus-seed", type=int, default=11)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--budgets", default=",".join(str(b) for b in range(100, 1001, 100)))
    ap.add_argument("--strategies", default=",".join(STRATEGIES))
    ap.add_argument("--metric", default="map_50", choices=("map_50", "map_coco"))
    ap.add_argument("--mode", default="static", choices=("static", "rescore"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/trend"))
    args = ap.parse_args()

    sim = SimConfig(profile=args.profile)
    pool = generate_corpus(args.profile, args.pool_size, args.corpus_seed, sim)
    test = generate_corpus(args.profile, args.test_size, args.corpus_seed + 1, sim)
    base = RunConfig(mode=args.mode, budget=BudgetConfig(50, 1000, 50), sim=sim)
    base = replace(base, eval=replace(base.eval, primary=args.metric))

    t = time.perf_counter()
    grid = compare(
        pool, test, base,
        args.strategies.split(","),
        [int(b) for b in args.budgets.split(",")],
        [int(s) for s in args.seeds.split(",")],
        args.workers,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    text = format_grid(grid)
    (args.out / "grid.txt").write_text(text)
    with open(args.out / "summary.csv", "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(grid_csv_rows(grid))
    print(text, end="")
    print(f"{time.perf_counter() - t:.1f}s")


if __name__ == "__main__":
    main()
