"""Null-model recovery: CI coverage of the HL difference when h = 0.

Also reports a long-term diagnostic that drops the first (treatment) rating,
which isolates how much of the long-term difference is the treatment itself.

    python scripts/null_recovery.py --runs 20 --n-products 2000
"""

import argparse

import numpy as np

from herding.effects import InsufficientDataError, bootstrap_ci, long_term_effect, per_index_effect
from herding.match import MatchPair
from herding.natexp import ExperimentConfig, ratings_by_product, run_experiment
from herding.simgen import CorruptionParams, SimConfig, generate
from herding.standardize import fit_yearly_stats, standardize


def one_run(seed: int, args) -> dict:
    cfg = SimConfig(n_products=args.n_products, shared_fraction=1.0, ratings_min=5, h=0.0,
                    sigma_q=args.sigma_q, corruption=CorruptionParams.none(), seed=seed)
    sim = generate(cfg)
    ratings = sim.ratings_a + sim.ratings_b
    by_product = ratings_by_product(standardize(ratings, fit_yearly_stats(ratings)))
    pairs = [MatchPair("product", a, b, 1.0, 1.0) for a, b in sim.truth.product_alignment]
    hl = run_experiment(pairs, by_product, ExperimentConfig(balance_seed=seed)).aggregated["HL"]
    est = per_index_effect("HL", hl, seed=seed)
    row = {"seed": seed, "n": len(hl), "gap1": est[0].difference}
    for e in est[1:]:
        row[f"cover{e.index}"] = e.ci_difference[0] <= 0 <= e.ci_difference[1]
    try:
        lt = long_term_effect("HL", hl, 20, seed=seed)
        row.update(lt_n=lt.n, lt_diff=lt.difference, lt_cover=lt.ci_difference[0] <= 0 <= lt.ci_difference[1])
        used = [a for a in hl if len(a.product.z_a) >= 20 and len(a.product.z_b) >= 20]
        later = np.array([np.mean(a.higher[1:]) - np.mean(a.lower[1:]) for a in used])
        lo, hi = bootstrap_ci(later, seed=seed)
        row.update(later_diff=float(later.mean()), later_cover=lo <= 0 <= hi)
    except InsufficientDataError:
        row.update(lt_n=0, lt_cover=False, later_cover=False)
    return row


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--n-products", type=int, default=2000)
    ap.add_argument("--sigma-q", type=float, default=1.0)
    args = ap.parse_args()
    rows = [one_run(s, args) for s in range(args.runs)]
    print("seed  n  gap1  cover2..5        lt_n  lt_diff  later_diff")
    for r in rows:
        covers = "".join("y" if r[f"cover{i}"] else "." for i in range(2, 6))
        print(f"{r['seed']:4d} {r['n']:3d} {r['gap1']:5.2f}  {covers:16s} {r['lt_n']:4d}  "
              f"{r.get('lt_diff', float('nan')):7.3f}  {r.get('later_diff', float('nan')):7.3f}")
    for i in range(2, 6):
        print(f"i={i}: CI contains 0 in {sum(r[f'cover{i}'] for r in rows)}/{len(rows)}")
    print(f"long-term (all ratings): {sum(r['lt_cover'] for r in rows)}/{len(rows)}")
    print(f"long-term (ratings 2..): {sum(r['later_cover'] for r in rows)}/{len(rows)}")
    print(f"mean i=1 gap: {np.mean([r['gap1'] for r in rows]):.3f}")


if __name__ == "__main__":
    main()
