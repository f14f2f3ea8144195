"""Estimated HL effect at i=2 against the herding coefficient h.

    python scripts/signal_sweep.py --h 0 0.1 0.2 0.3 0.4 0.6 --seeds 10
"""

import argparse

import numpy as np

from herding.effects import per_index_effect
from herding.match import MatchPair
from herding.natexp import ExperimentConfig, ratings_by_product, run_experiment
from herding.simgen import CorruptionParams, SimConfig, generate
from herding.standardize import fit_yearly_stats, standardize


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, nargs="+", default=[0.0, 0.2, 0.4])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--n-products", type=int, default=2000)
    ap.add_argument("--anchor", choices=["cumulative", "first"], default="cumulative")
    args = ap.parse_args()
    print("h,mean_gap1,mean_diff2,ratio,ci_excludes_0")
    for h in args.h:
        gaps, diffs, excl = [], [], 0
        for seed in range(args.seeds):
            sim = generate(SimConfig(n_products=args.n_products, shared_fraction=1.0, ratings_min=5, h=h,
                                     anchor=args.anchor, corruption=CorruptionParams.none(), seed=seed))
            ratings = sim.ratings_a + sim.ratings_b
            by_product = ratings_by_product(standardize(ratings, fit_yearly_stats(ratings)))
            pairs = [MatchPair("product", a, b, 1.0, 1.0) for a, b in sim.truth.product_alignment]
            hl = run_experiment(pairs, by_product, ExperimentConfig(balance_seed=seed)).aggregated["HL"]
            e1, e2 = per_index_effect("HL", hl, indices=(1, 2), seed=seed)
            gaps.append(e1.difference)
            diffs.append(e2.difference)
            excl += e2.ci_difference[0] > 0 or e2.ci_difference[1] < 0
        ratio = np.mean(diffs) / (h * np.mean(gaps)) if h else float("nan")
        print(f"{h},{np.mean(gaps):.4f},{np.mean(diffs):.4f},{ratio:.4f},{excl}/{args.seeds}")


if __name__ == "__main__":
    main()
