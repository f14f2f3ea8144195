"""Acceptance criteria, each run at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; a summary line per criterion
is printed at the end of the session.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

from conftest import record
from herding.cli import main
from herding.effects import EffectsConfig, InsufficientDataError, bootstrap_ci, estimate_all, long_term_effect, normalized_ranks, per_index_effect
from herding.match import MatchConfig, MatchPair, evaluate_matching, match_catalogs
from herding.natexp import ASYMMETRIC_GROUPS, ExperimentConfig, n_extreme, ratings_by_product, run_experiment, site_split
from herding.pipeline import ARTIFACTS, EXIT_OK
from herding.simgen import CorruptionParams, SimConfig, generate
from herding.standardize import fit_yearly_stats, standardize, year_of
from herding.validity import external_validity, internal_validity

pytestmark = pytest.mark.slow


def _truth_pairs(sim):
    return [MatchPair("product", a, b, 1.0, 1.0) for a, b in sim.truth.product_alignment]


def _experiment(sim, pairs, seed, p=15.0):
    ratings = sim.ratings_a + sim.ratings_b
    by_product = ratings_by_product(standardize(ratings, fit_yearly_stats(ratings)))
    return run_experiment(pairs, by_product, ExperimentConfig(p=p, balance_seed=seed))


def _matched_sim(h, seed):
    # 2,000 shared products, each rated at least 5 times per site
    cfg = SimConfig(n_products=2000, shared_fraction=1.0, ratings_min=5, h=h,
                    corruption=CorruptionParams.none(), seed=seed)
    return generate(cfg)


def test_criterion_1_standardization():
    # 500 products per site x 10 ratings = 10,000 ratings over 6 years
    sim = generate(SimConfig(n_products=625, ratings_min=10, ratings_max=10, ratings_shape=0.0, n_years=6, seed=1))
    ratings = sim.ratings_a + sim.ratings_b
    assert len(ratings) == 10_000
    t0 = time.perf_counter()
    z = standardize(ratings, fit_yearly_stats(ratings))
    elapsed = time.perf_counter() - t0
    cells = {}
    for s in z:
        cells.setdefault((s.record.site_id, year_of(s.record.timestamp)), []).append(s.z)
    worst_mean = max(abs(np.mean(v)) for v in cells.values())
    worst_std = max(abs(np.std(v) - 1.0) for v in cells.values())
    ok = len(cells) == 12 and worst_mean < 1e-9 and worst_std < 1e-9 and elapsed < 5.0
    record(1, ok, f"cells={len(cells)} max|mean|={worst_mean:.1e} max|std-1|={worst_std:.1e} runtime={elapsed:.2f}s")
    assert ok


def test_criterion_2_matching_quality():
    sim = generate(SimConfig(n_products=1000, shared_fraction=1.0, seed=0))
    t0 = time.perf_counter()
    _, pairs = match_catalogs(sim.catalog_a, sim.catalog_b, MatchConfig())
    elapsed = time.perf_counter() - t0
    precision, recall = evaluate_matching(pairs, sim.truth.product_alignment)
    ok = precision >= 0.99 and recall >= 0.70 and elapsed < 60
    record(2, ok, f"precision={precision:.4f} recall={recall:.4f} pairs={len(pairs)} runtime={elapsed:.2f}s")
    assert ok


def test_criterion_3_structural_invariants():
    failures = []
    cases = [(seed, p) for seed in range(4) for p in (10.0, 15.0, 25.0)]
    for seed, p in cases:
        sim = generate(SimConfig(n_products=600, ratings_min=1, seed=seed))
        _, pairs = match_catalogs(sim.catalog_a, sim.catalog_b)
        exp = _experiment(sim, pairs, seed, p)
        k = n_extreme(len(exp.population), p)
        for site, labels in (("A", exp.labels_a), ("B", exp.labels_b)):
            vals = list(labels.values())
            if not vals.count("H") == vals.count("L") == k == math.ceil(p / 100 * len(vals)):
                failures.append((seed, p, site, "label counts"))
        for g in ASYMMETRIC_GROUPS:
            if len(exp.balanced[g]) != len(exp.balanced[g[::-1]]):
                failures.append((seed, p, g, "balance"))
            n_a, n_b = site_split(exp.aggregated[g])
            if exp.aggregated[g] and n_a / (n_a + n_b) != 0.5:
                failures.append((seed, p, g, "Pr(higher on A)"))
        if len(exp.aggregated) > 6:
            failures.append((seed, p, "*", "group count"))
    record(3, not failures, f"{len(cases)} inputs checked, violations={failures}")
    assert not failures


def test_selection_gap_oracle():
    # independent check of the truncation value quoted for i=1
    c = norm.ppf(0.85)
    closed = 2 * norm.pdf(c) / 0.15
    x = np.random.default_rng(0).normal(size=2_000_000)
    mc = x[x > c].mean() - x[x < -c].mean()
    assert closed == pytest.approx(3.1088, abs=1e-4)
    assert mc == pytest.approx(closed, abs=0.01)
    # with first ratings correlated through shared quality (0.5 at defaults) the HL gap is smaller
    rng = np.random.default_rng(1)
    q = rng.normal(size=2_000_000)
    a, b = (q + rng.normal(size=q.size)) / math.sqrt(2), (q + rng.normal(size=q.size)) / math.sqrt(2)
    hl = (a > c) & (b < -c)
    assert (a[hl] - b[hl]).mean() == pytest.approx(2.72, abs=0.02)


def test_criterion_4_null_recovery():
    runs = 20
    cover = {i: 0 for i in (2, 3, 4, 5)}
    cover_lt, gaps, sizes, lt_sizes = 0, [], [], []
    for seed in range(runs):
        sim = _matched_sim(0.0, seed)
        exp = _experiment(sim, _truth_pairs(sim), seed)
        hl = exp.aggregated["HL"]
        sizes.append(len(hl))
        est = per_index_effect("HL", hl, seed=seed)
        gaps.append(est[0].difference)
        for e in est[1:]:
            cover[e.index] += e.ci_difference[0] <= 0.0 <= e.ci_difference[1]
        try:
            lt = long_term_effect("HL", hl, 20, seed=seed)
            lt_sizes.append(lt.n)
            cover_lt += lt.ci_difference[0] <= 0.0 <= lt.ci_difference[1]
        except InsufficientDataError:
            lt_sizes.append(0)  # no interval at all counts as a miss
    ok_index = all(v >= 18 for v in cover.values())
    ok_lt = cover_lt >= 18
    ok_gap = np.mean(gaps) > 2.5
    record(4, ok_index and ok_lt and ok_gap,
           f"CI∋0 per index {cover} (need ≥18/20); long-term {cover_lt}/20; "
           f"i=1 gap min={min(gaps):.2f} mean={np.mean(gaps):.2f}; HL sizes {sizes}; long-term n {lt_sizes}")
    assert ok_gap, gaps
    assert ok_index, cover
    assert ok_lt, (cover_lt, lt_sizes)


def test_criterion_5_signal_recovery():
    h_values = (0.0, 0.2, 0.4)
    means, ratios, excl, d2, g1 = {}, [], [], [], []
    for h in h_values:
        diffs = []
        for seed in range(10):
            sim = _matched_sim(h, seed)
            est = per_index_effect("HL", _experiment(sim, _truth_pairs(sim), seed).aggregated["HL"], seed=seed)
            diffs.append(est[1].difference)
            if h == 0.4:
                d2.append(est[1].difference)
                g1.append(est[0].difference)
                ratios.append(est[1].difference / (h * est[0].difference))
                excl.append(est[1].ci_difference[0] > 0.0)
        means[h] = float(np.mean(diffs))
    # the target is h times the mean i=1 gap, so the comparison is on the pooled runs
    pooled = float(np.mean(d2) / (0.4 * np.mean(g1)))
    increasing = means[0.0] < means[0.2] < means[0.4]
    ok = abs(pooled - 1.0) <= 0.2 and all(excl) and increasing
    record(5, ok, f"h=0.4 pooled diff2/(h*gap1)={pooled:.3f} (per seed {np.round(ratios, 2).tolist()}); "
                  f"CI>0 {sum(excl)}/10; mean diff2 by h {({k: round(v, 3) for k, v in means.items()})}")
    assert ok


def _naive_ranks(values):
    n = len(values)
    return [(n - (1 + sum(w > v for w in values) + (sum(w == v for w in values) - 1) / 2)) / (n - 1) for v in values]


def test_criterion_6_rank_invariant():
    sim = generate(SimConfig(n_products=3000, shared_fraction=1.0, ratings_min=5, h=0.3, seed=2,
                             corruption=CorruptionParams.none()))
    exp = _experiment(sim, _truth_pairs(sim), 2)
    res = estimate_all(exp.aggregated, exp.balanced, EffectsConfig(n_resamples=100))
    worst = max(abs(r.mean_higher + r.mean_lower - 1.0) for r in res.ranks)
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(2, 13))
        values = rng.integers(-3, 4, size=n).astype(float).tolist()  # small support forces ties
        mismatches += list(normalized_ranks(values)) != _naive_ranks(values)
    ok = len(res.ranks) == 30 and worst <= 1e-9 and mismatches == 0
    record(6, ok, f"rank rows={len(res.ranks)} max|hi+lo-1|={worst:.1e}; oracle mismatches={mismatches}/100")
    assert ok


def test_criterion_7_bootstrap_calibration():
    hits = 0
    for k in range(1000):
        x = np.random.default_rng([7, k]).normal(size=200)
        lo, hi = bootstrap_ci(x, 1000, 0.05, seed=k)
        hits += lo <= 0.0 <= hi
    ok = 930 <= hits <= 970
    record(7, ok, f"coverage={hits / 10:.1f}% (need 93-97%)")
    assert ok


def test_criterion_8_determinism(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"simulate": {"n_products": 3000, "ratings_min": 5, "seed": 8},
                               "effects": {"n_resamples": 300}}))
    c = ["--config", str(cfg)]
    codes = [main(["pipeline", *c, "--out", str(tmp_path / "r1")]),
             main(["pipeline", *c, "--out", str(tmp_path / "r2"), "--threads", "4"])]
    data, steps = tmp_path / "data", tmp_path / "steps"
    codes.append(main(["simulate", *c, "--out", str(data)]))
    io = [*c, "--inputs", str(data), "--out", str(steps)]
    for step in ("match", "standardize", "label"):
        codes.append(main([step, *io]))
    codes.append(main(["balance", *c, "--out", str(steps)]))
    codes.append(main(["effects", *io]))
    codes.append(main(["validity", *io]))
    names = [name for _, name in ARTIFACTS] + ["manifest.json"]
    rerun_diff = [n for n in names if (tmp_path / "r1" / n).read_bytes() != (tmp_path / "r2" / n).read_bytes()]
    steps_diff = [n for n, _ in zip(names, ARTIFACTS)
                  if (tmp_path / "r1" / n).read_bytes() != (steps / n).read_bytes()]
    ok = set(codes) == {EXIT_OK} and not rerun_diff and not steps_diff
    record(8, ok, f"exit codes {codes}; rerun differs in {rerun_diff}; composed differs in {steps_diff}")
    assert ok


def test_criterion_9_validity():
    flagged = total = 0
    tvds = []
    for seed in range(10):
        sim = generate(SimConfig(n_products=5000, ratings_min=5, h=0.0, seed=seed))
        pairs = _truth_pairs(sim)  # matchability independent of every attribute
        exp = _experiment(sim, pairs, seed)
        rows = [r for r in internal_validity(exp.aggregated, sim.catalog_a + sim.catalog_b).all_rows() if r.n >= 20]
        flagged += sum(r.flagged for r in rows)
        total += len(rows)
        ext = external_validity(sim.catalog_a + sim.catalog_b, sim.ratings_a + sim.ratings_b, pairs)
        tvds.extend(a.tvd for s in ext.sites for a in s.attributes)
    share = flagged / total
    ok = total > 0 and share < 0.10 and max(tvds) < 0.05
    record(9, ok, f"flagged {flagged}/{total} rows ({share:.1%}); max TVD={max(tvds):.4f}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
