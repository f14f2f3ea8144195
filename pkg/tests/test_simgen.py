import dataclasses
import filecmp

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from herding.ingest import load_catalog
from herding.simgen import (
    SIM_FILES,
    CorruptionParams,
    SimConfig,
    SiteConvention,
    corrupt_names,
    fold_diacritics,
    generate,
    latent_scores,
    read_truth,
    write_simulation,
)
from herding.standardize import year_of


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(h=1.5)
    with pytest.raises(ValueError):
        SimConfig(n_products=0)
    with pytest.raises(ValueError):
        SiteConvention(3.0, 0.1, std_floor=0.2)


def test_h_zero_correlation_matches_closed_form():
    sim = generate(SimConfig(n_products=20000, shared_fraction=0.0, ratings_min=2, ratings_shape=0.0, seed=1))
    z = np.array([v[:2] for v in sim.truth.latent.values()])
    r = np.corrcoef(z[:, 0], z[:, 1])[0, 1]
    assert r == pytest.approx(0.5, abs=0.02)


def test_h_one_freezes_first_rating():
    rng = np.random.default_rng(0)
    q = rng.normal(size=50)
    z = latent_scores(q, rng.normal(size=(50, 8)), 1.0)
    assert np.allclose(z, z[:, :1])
    z_first = latent_scores(q, rng.normal(size=(50, 8)), 1.0, anchor="first")
    assert np.allclose(z_first, z_first[:, :1])


def test_recurrence_hand_case():
    z = latent_scores(np.array([1.0]), np.array([[1.0, 0.0, -1.0]]), 0.5)
    # z1 = 2; z2 = 0.5*1 + 0.5*2 = 1.5; z3 = 0.5*0 + 0.5*(3.5/2)
    assert z.tolist() == [[2.0, 1.5, 0.875]]
    z = latent_scores(np.array([1.0]), np.array([[1.0, 0.0, -1.0]]), 0.5, anchor="first")
    assert z.tolist() == [[2.0, 1.5, 1.0]]


def test_same_seed_identical_files(tmp_path):
    cfg = SimConfig(n_products=200, seed=4)
    write_simulation(tmp_path / "x", generate(cfg))
    write_simulation(tmp_path / "y", generate(cfg))
    for name in SIM_FILES.values():
        assert filecmp.cmp(tmp_path / "x" / name, tmp_path / "y" / name, shallow=False)
    assert read_truth(tmp_path / "x" / "truth.csv") == generate(cfg).truth.product_alignment


def test_structure(small_sim):
    sim = small_sim
    ids_a = {e.product_id for e in sim.catalog_a}
    ids_b = {e.product_id for e in sim.catalog_b}
    align = sim.truth.product_alignment
    assert len(align) == 180  # 0.6 of 300
    assert len({a for a, _ in align}) == len({b for _, b in align}) == len(align)
    assert all(a in ids_a and b in ids_b for a, b in align)
    for a, b in align:
        assert sim.truth.quality[("A", a)] == sim.truth.quality[("B", b)]


def test_ratings_well_formed(small_sim):
    for ratings in (small_sim.ratings_a, small_sim.ratings_b):
        by_product = {}
        for r in ratings:
            assert 1.0 <= r.score <= 5.0
            assert 2010 <= year_of(r.timestamp) <= 2015
            by_product.setdefault(r.product_id, []).append(r.timestamp)
        for ts in by_product.values():
            assert len(ts) >= 5
            assert all(t1 < t2 for t1, t2 in zip(ts, ts[1:]))


def test_clamping_rare_and_drift_shape():
    sim = generate(SimConfig(n_products=3000, seed=2))
    for ratings in (sim.ratings_a, sim.ratings_b):
        scores = np.array([r.score for r in ratings])
        assert np.mean((scores == 1.0) | (scores == 5.0)) < 0.01
        years = np.array([year_of(r.timestamp) for r in ratings])
        means = [scores[years == y].mean() for y in range(2010, 2016)]
        stds = [scores[years == y].std() for y in range(2010, 2016)]
        assert all(m1 < m2 for m1, m2 in zip(means, means[1:]))
        assert all(s1 > s2 for s1, s2 in zip(stds, stds[1:]))


def test_corruption_off_is_identity(data_dir):
    cat = load_catalog(data_dir / "catalog_three.jsonl")
    assert corrupt_names(cat, CorruptionParams.none(), seed=1) == cat


def test_producer_prefixing(data_dir):
    cat = load_catalog(data_dir / "catalog_three.jsonl")
    params = CorruptionParams(0.0, 0.0, 0.0, 1.0)
    out = corrupt_names(cat, params, seed=1)
    assert out[0].product_name == "Ingobräu Meistersud"
    assert out[1].product_name == "Lost Rhino Brewing Company Rhino Chaser"
    assert [e.product_id for e in out] == [e.product_id for e in cat]


def test_corruption_deterministic_and_folds(data_dir):
    cat = load_catalog(data_dir / "catalog_three.jsonl")
    params = CorruptionParams(1.0, 0.0, 0.0, 0.0)
    out = corrupt_names(cat, params, seed=8)
    assert out == corrupt_names(cat, params, seed=8)
    assert out[0].producer_name == "Ingobrau"
    assert fold_diacritics("Märzen") == "Marzen"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 1), st.sampled_from(["cumulative", "first"]))
def test_generate_respects_invariants(seed, h, anchor):
    cfg = SimConfig(n_products=40, h=h, anchor=anchor, seed=seed, ratings_max=30)
    sim = generate(cfg)
    assert len(sim.catalog_a) + len(sim.catalog_b) == 40 + len(sim.truth.product_alignment)
    assert all(1.0 <= r.score <= 5.0 for r in sim.ratings_a + sim.ratings_b)


def test_from_dict_roundtrip():
    cfg = SimConfig(n_products=10, h=0.3, site_a=SiteConvention(3.0, 0.5), corruption=CorruptionParams.none())
    assert SimConfig.from_dict(dataclasses.asdict(cfg)) == cfg
