import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from herding.ingest import RatingRecord
from herding.standardize import (
    DegenerateCellError,
    MissingCellError,
    fit_yearly_stats,
    read_stats_csv,
    standardize,
    write_stats_csv,
    year_of,
)

T2010 = 1262304000  # 2010-01-01T00:00:00Z
T2011 = 1293840000


def _ratings(site, t, scores):
    return [RatingRecord(site, f"p{i}", f"u{i}", t + i, s) for i, s in enumerate(scores)]


def test_year_boundaries_utc():
    assert year_of(T2010) == 2010
    assert year_of(T2011 - 1) == 2010
    assert year_of(T2011) == 2011


def test_population_std_hand_value():
    stats = fit_yearly_stats(_ratings("A", T2010, [1, 2, 3]))
    cell = stats[("A", 2010)]
    assert cell.mean == 2.0
    assert cell.std == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
    assert round(cell.std, 5) == 0.8165
    assert cell.count == 3


def test_zero_variance_names_cell():
    with pytest.raises(DegenerateCellError, match="A.*2010"):
        fit_yearly_stats(_ratings("A", T2010, [4, 4, 4]))


def test_singleton_cell_rejected():
    with pytest.raises(DegenerateCellError):
        fit_yearly_stats(_ratings("B", T2011, [3.5]))


def test_cells_are_independent():
    stats = fit_yearly_stats(_ratings("A", T2010, [1, 3]) + _ratings("B", T2010, [2, 4]))
    assert (stats[("A", 2010)].mean, stats[("A", 2010)].std) == (2.0, 1.0)
    assert (stats[("B", 2010)].mean, stats[("B", 2010)].std) == (3.0, 1.0)


def test_z_hand_value_and_mean_is_zero():
    rs = _ratings("A", T2010, [1, 2, 3])
    z = [s.z for s in standardize(rs, fit_yearly_stats(rs))]
    assert z[1] == 0.0
    assert z[2] == pytest.approx(1.224744871391589, abs=1e-12)


def test_missing_cell():
    stats = fit_yearly_stats(_ratings("A", T2010, [1, 3]))
    with pytest.raises(MissingCellError):
        standardize(_ratings("A", T2011, [2]), stats)


def test_stats_csv_roundtrip(tmp_path, small_sim):
    rs = small_sim.ratings_a + small_sim.ratings_b
    stats = fit_yearly_stats(rs)
    write_stats_csv(tmp_path / "s.csv", stats)
    assert read_stats_csv(tmp_path / "s.csv").cells == stats.cells


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1, 5, allow_nan=False), min_size=2, max_size=40),
       st.lists(st.floats(1, 5, allow_nan=False), min_size=2, max_size=40))
def test_cell_moments_after_standardizing(xs, ys):
    rs = _ratings("A", T2010, xs) + _ratings("A", T2011, ys)
    try:
        stats = fit_yearly_stats(rs)
    except DegenerateCellError:
        return
    out = standardize(rs, stats)
    for year in (2010, 2011):
        z = np.array([s.z for s in out if year_of(s.record.timestamp) == year])
        assert abs(z.mean()) < 1e-9
        assert abs(z.std() - 1.0) < 1e-9
