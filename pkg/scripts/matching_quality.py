"""Precision and recall of cross-site matching over a (theta, delta) grid.

    python scripts/matching_quality.py --n-products 1000 --seeds 3
"""

import argparse
import time

from herding.match import MatchConfig, evaluate_matching, match_catalogs
from herding.simgen import CorruptionParams, SimConfig, generate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-products", type=int, default=1000)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--theta", type=float, nargs="+", default=[0.6, 0.7, 0.8, 0.9])
    ap.add_argument("--delta", type=float, nargs="+", default=[0.0, 0.1, 0.3])
    ap.add_argument("--no-corruption", action="store_true")
    args = ap.parse_args()
    corruption = CorruptionParams.none() if args.no_corruption else CorruptionParams()
    sims = [generate(SimConfig(n_products=args.n_products, shared_fraction=1.0, corruption=corruption, seed=s))
            for s in range(args.seeds)]
    print("theta,delta,seed,pairs,precision,recall,seconds")
    for theta in args.theta:
        for delta in args.delta:
            for seed, sim in enumerate(sims):
                t0 = time.perf_counter()
                _, pairs = match_catalogs(sim.catalog_a, sim.catalog_b, MatchConfig(theta, delta))
                dt = time.perf_counter() - t0
                p, r = evaluate_matching(pairs, sim.truth.product_alignment)
                print(f"{theta},{delta},{seed},{len(pairs)},{p:.4f},{r:.4f},{dt:.2f}")


if __name__ == "__main__":
    main()
