"""Compare warm-start retraining with a cold retrain on the loop's picks only.

The cold variant trains each round from scratch on the images picked by the
loop so far, without the seed set. Prints budget vs mAP for both.
"""

import argparse
from dataclasses import replace

import numpy as np

from tabal.config import BudgetConfig, RunConfig
from tabal.experiment import metric_by_budget, run_experiment
from tabal.simulator import generate_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--strategy", default="tc")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--budget", type=int, default=500)
    args = ap.parse_args()

    pool = generate_corpus("latex-like", 2000, 11)
    test = generate_corpus("latex-like", 400, 12)
    base = RunConfig(strategy=args.strategy, budget=BudgetConfig(50, args.budget, 50))
    curves = {}
    for cold in (False, True):
        per_seed = [
            metric_by_budget(run_experiment(pool, test, replace(base, seed=int(s), cold_retrain=cold)))
            for s in args.seeds.split(",")
        ]
        curves[cold] = {b: np.mean([c[b] for c in per_seed]) for b in per_seed[0]}
    print(f"{'budget':>7}  {'warm':>7}  {'cold':>7}")
    for b in sorted(curves[False]):
        print(f"{b:>7}  {curves[False][b]:.4f}  {curves[True][b]:.4f}")


if __name__ == "__main__":
    main()
