"""Herding effect estimates on aggregated paired-treatment groups.

All confidence intervals are percentile bootstraps that resample products,
so the higher- and lower-treatment sides of an estimate always come from the
same resampled product set.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .natexp import AGGREGATED_GROUPS, ASYMMETRIC_GROUPS, GROUP_CODES, Assigned, MatchedProduct

LONG_TERM = "long-term"

# stream tags keep bootstrap seeds of different analyses apart
_TAG_INDEX, _TAG_LONG, _TAG_DISAGG = 0, 1, 2


class InsufficientDataError(ValueError):
    pass


class EmptyGroupError(InsufficientDataError):
    pass


@dataclass(frozen=True)
class EffectsConfig:
    indices: tuple[int, ...] = (1, 2, 3, 4, 5)
    long_term_min_ratings: int = 20
    n_resamples: int = 1000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.indices or min(self.indices) < 1:
            raise ValueError("rating indices start at 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")


@dataclass(frozen=True)
class EffectEstimate:
    group: str
    index: int | str
    mean_higher: float
    mean_lower: float
    difference: float
    ci_higher: tuple[float, float]
    ci_lower: tuple[float, float]
    ci_difference: tuple[float, float]
    n: int


@dataclass(frozen=True)
class RankEffect:
    group: str
    index: int
    mean_higher: float
    mean_lower: float
    n: int


@dataclass(frozen=True)
class DisaggregatedCell:
    pair: str  # unordered group, higher label first, e.g. "HL"
    row: str  # treatment label whose site the value is read from
    column: str  # site that received the higher treatment
    mean: float | None
    ci: tuple[float, float] | None
    n: int


def derive_seed(master: int, tag: int, group: str, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, tag, GROUP_CODES[group], index])


def _quantiles(stats: np.ndarray, alpha: float) -> np.ndarray:
    return np.quantile(stats, [alpha / 2, 1 - alpha / 2], axis=0, method="linear")


def _resample_indices(n: int, n_resamples: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, n, size=(n_resamples, n))


def bootstrap_ci(values, n_resamples: int = 1000, alpha: float = 0.05, seed=0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of per-product values."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise InsufficientDataError("bootstrap needs at least 2 values")
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    means = x[_resample_indices(len(x), n_resamples, seed)].mean(axis=1)
    lo, hi = _quantiles(means, alpha)
    return float(lo), float(hi)


def _paired_estimate(
    group: str, index, higher: np.ndarray, lower: np.ndarray, n_resamples: int, alpha: float, seed
) -> EffectEstimate:
    n = len(higher)
    diff = higher - lower
    points = np.array([higher.mean(), lower.mean(), diff.mean()])
    idx = _resample_indices(n, n_resamples, seed)
    boot = np.stack([higher[idx].mean(axis=1), lower[idx].mean(axis=1), diff[idx].mean(axis=1)], axis=1)
    lo, hi = _quantiles(boot, alpha)
    # a percentile interval can in principle miss its own point estimate; widen to contain it
    lo = np.minimum(lo, points)
    hi = np.maximum(hi, points)
    cis = [(float(lo[k]), float(hi[k])) for k in range(3)]
    return EffectEstimate(group, index, float(points[0]), float(points[1]), float(points[2]), *cis, n)


def _eligible(members: Sequence[Assigned], need: int) -> list[Assigned]:
    return [a for a in members if len(a.product.z_a) >= need and len(a.product.z_b) >= need]


def _check_size(group: str, members: Sequence, what: str) -> None:
    if not members:
        raise EmptyGroupError(f"group {group} is empty for {what}")
    if len(members) < 2:
        raise InsufficientDataError(f"group {group} has {len(members)} member for {what}; need 2")


def per_index_effect(
    group: str,
    members: Sequence[Assigned],
    indices: Sequence[int] = (1, 2, 3, 4, 5),
    min_ratings: int = 5,
    *,
    n_resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> list[EffectEstimate]:
    """Mean i-th standardized rating on the higher vs lower treatment side.

    Only members with at least max(min_ratings, max(indices)) ratings on both
    sites are used, so every index is computed on the same products.
    """
    used = _eligible(members, max(min_ratings, max(indices)))
    _check_size(group, used, "per-index effects")
    out = []
    for i in indices:
        higher = np.array([a.higher[i - 1] for a in used])
        lower = np.array([a.lower[i - 1] for a in used])
        out.append(_paired_estimate(group, i, higher, lower, n_resamples, alpha,
                                    derive_seed(seed, _TAG_INDEX, group, i)))
    return out


def long_term_effect(
    group: str,
    members: Sequence[Assigned],
    min_ratings: int = 20,
    *,
    n_resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> EffectEstimate:
    """Per-product mean of all standardized ratings, compared across sides."""
    used = _eligible(members, min_ratings)
    _check_size(group, used, "long-term effect")
    higher = np.array([np.mean(a.higher) for a in used])
    lower = np.array([np.mean(a.lower) for a in used])
    return _paired_estimate(group, LONG_TERM, higher, lower, n_resamples, alpha,
                            derive_seed(seed, _TAG_LONG, group, 0))


def normalized_ranks(values: Sequence[float]) -> np.ndarray:
    """1 for the best (largest) value, 0 for the worst; ties share their average rank."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n < 2:
        raise InsufficientDataError("ranking needs at least 2 values")
    ranks = rankdata(-v, method="average")
    return (n - ranks) / (n - 1)


def rank_effect(
    group: str, members: Sequence[Assigned], indices: Sequence[int] = (1, 2, 3, 4, 5), min_ratings: int = 5
) -> list[RankEffect]:
    used = _eligible(members, max(min_ratings, max(indices)))
    _check_size(group, used, "rank effects")
    on_a = np.array([a.higher_site == "A" for a in used])
    out = []
    for i in indices:
        r_a = normalized_ranks([a.product.z_a[i - 1] for a in used])
        r_b = normalized_ranks([a.product.z_b[i - 1] for a in used])
        higher = np.where(on_a, r_a, r_b)
        lower = np.where(on_a, r_b, r_a)
        out.append(RankEffect(group, i, float(higher.mean()), float(lower.mean()), len(used)))
    return out


def disaggregated_table(
    balanced: Mapping[str, Sequence[MatchedProduct]],
    index: int = 5,
    min_ratings: int = 5,
    *,
    n_resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> list[DisaggregatedCell]:
    """Mean ``index``-th rating per (label, site of higher treatment) on non-aggregated groups."""
    need = max(min_ratings, index)
    cells = []
    for pair in ASYMMETRIC_GROUPS:
        hi_label, lo_label = pair[0], pair[1]
        for column in ("A", "B"):
            ordered = pair if column == "A" else pair[::-1]
            members = [m for m in balanced.get(ordered, ()) if len(m.z_a) >= need and len(m.z_b) >= need]
            for row in (hi_label, lo_label):
                # the row label sits on site A iff it is the first letter of the ordered group
                values = np.array([(m.z_a if ordered[0] == row else m.z_b)[index - 1] for m in members])
                mean = float(values.mean()) if len(values) else None
                ci = None
                if len(values) >= 2:
                    code = 2 * (column == "B") + (row == lo_label)
                    lo, hi = bootstrap_ci(values, n_resamples, alpha,
                                          derive_seed(seed, _TAG_DISAGG, pair, 10 * index + code))
                    ci = (min(lo, mean), max(hi, mean))
                cells.append(DisaggregatedCell(pair, row, column, mean, ci, len(values)))
    return cells


@dataclass
class EffectsResult:
    per_index: list[EffectEstimate]
    long_term: list[EffectEstimate]
    ranks: list[RankEffect]
    disaggregated: list[DisaggregatedCell]
    degenerate: list[dict]


def estimate_all(
    aggregated: Mapping[str, Sequence[Assigned]],
    balanced: Mapping[str, Sequence[MatchedProduct]],
    config: EffectsConfig,
    min_ratings: int = 5,
    threads: int = 1,
) -> EffectsResult:
    """Every estimate for every aggregated group; degenerate groups are recorded, not raised."""
    kw = dict(n_resamples=config.n_resamples, alpha=config.alpha, seed=config.seed)

    def one(group: str):
        members = aggregated.get(group, ())
        res, problems = {}, []
        jobs = {
            "per_index": lambda: per_index_effect(group, members, config.indices, min_ratings, **kw),
            "long_term": lambda: [long_term_effect(group, members, config.long_term_min_ratings, **kw)],
            "ranks": lambda: rank_effect(group, members, config.indices, min_ratings),
        }
        for name, job in jobs.items():
            try:
                res[name] = job()
            except InsufficientDataError as exc:
                res[name] = []
                problems.append({"group": group, "analysis": name, "reason": str(exc)})
        return res, problems

    # executor.map preserves order, so worker count never changes the output
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, AGGREGATED_GROUPS))
    out = EffectsResult([], [], [], [], [])
    for res, problems in results:
        out.per_index.extend(res["per_index"])
        out.long_term.extend(res["long_term"])
        out.ranks.extend(res["ranks"])
        out.degenerate.extend(problems)
    out.disaggregated = disaggregated_table(balanced, max(config.indices), min_ratings, **kw)
    return out


# --- plot-ready exports -----------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_effects_csv(path: str | Path, estimates: Sequence[EffectEstimate]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "index", "side", "mean", "ci_lo", "ci_hi", "n"])
        for e in estimates:
            for side, mean, ci in (
                ("higher", e.mean_higher, e.ci_higher),
                ("lower", e.mean_lower, e.ci_lower),
                ("difference", e.difference, e.ci_difference),
            ):
                w.writerow([e.group, e.index, side, _fmt(mean), _fmt(ci[0]), _fmt(ci[1]), e.n])


def write_ranks_csv(path: str | Path, ranks: Sequence[RankEffect]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "index", "side", "mean", "n"])
        for r in ranks:
            w.writerow([r.group, r.index, "higher", _fmt(r.mean_higher), r.n])
            w.writerow([r.group, r.index, "lower", _fmt(r.mean_lower), r.n])


def write_disaggregated_csv(path: str | Path, cells: Sequence[DisaggregatedCell]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "row", "higher_on", "mean", "ci_lo", "ci_hi", "n"])
        for c in cells:
            lo, hi = c.ci if c.ci is not None else (None, None)
            w.writerow([c.pair, c.row, c.column, _fmt(c.mean), _fmt(lo), _fmt(hi), c.n])


def read_effects_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))

