"""Treatment labeling, paired-treatment groups, balancing and aggregation."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import ceil
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import CatalogEntry, RatingRecord
from .match import MatchPair
from .standardize import StandardizedRating

LABELS = ("H", "M", "L")
_LEVEL = {"H": 2, "M": 1, "L": 0}
ORDERED_GROUPS = tuple(a + b for a in LABELS for b in LABELS)
AGGREGATED_GROUPS = ("HH", "HM", "HL", "MM", "ML", "LL")
ASYMMETRIC_GROUPS = ("HM", "HL", "ML")
# stable integer codes for seed derivation; keyed by unordered group
GROUP_CODES = {g: i for i, g in enumerate(AGGREGATED_GROUPS)}


@dataclass(frozen=True)
class ExperimentConfig:
    p: float = 15.0
    min_ratings: int = 5
    balance_seed: int = 0
    label_population: str = "matched"  # "matched" or "site"

    def __post_init__(self):
        if not 0 < self.p < 50:
            raise ValueError(f"p must be in (0, 50), got {self.p}")
        if self.min_ratings < 1:
            raise ValueError("min_ratings must be >= 1")
        if self.label_population not in ("matched", "site"):
            raise ValueError(f"unknown label_population {self.label_population!r}")


@dataclass(frozen=True)
class MatchedProduct:
    id_a: str
    id_b: str
    first_a: float
    first_b: float
    z_a: tuple[float, ...] = field(default=(), compare=False, repr=False)
    z_b: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def canonical_key(self) -> tuple[str, str]:
        # unchanged when the two sites swap names
        return tuple(sorted((self.id_a, self.id_b)))

    def swapped(self) -> "MatchedProduct":
        return MatchedProduct(self.id_b, self.id_a, self.first_b, self.first_a, self.z_b, self.z_a)


@dataclass(frozen=True)
class Assigned:
    """A balanced member of an aggregated group, annotated with its higher-treatment site."""

    product: MatchedProduct
    label_a: str
    label_b: str
    higher_site: str

    @property
    def ordered_group(self) -> str:
        return self.label_a + self.label_b

    @property
    def higher(self) -> tuple[float, ...]:
        return self.product.z_a if self.higher_site == "A" else self.product.z_b

    @property
    def lower(self) -> tuple[float, ...]:
        return self.product.z_b if self.higher_site == "A" else self.product.z_a


def aggregated_key(label_a: str, label_b: str) -> str:
    hi, lo = sorted((label_a, label_b), key=lambda t: -_LEVEL[t])
    return hi + lo


def ratings_by_product(ratings: Iterable[StandardizedRating]) -> dict[tuple[str, str], list[StandardizedRating]]:
    """(site, product_id) -> standardized ratings in the ingest total order."""
    out: dict[tuple[str, str], list[StandardizedRating]] = defaultdict(list)
    for r in sorted(ratings, key=lambda r: r.order_key):
        out[(r.record.site_id, r.record.product_id)].append(r)
    return dict(out)


def first_rating(
    product_id: str, site: str, ratings: Iterable[StandardizedRating], min_ratings: int = 1
) -> StandardizedRating:
    own = [r for r in ratings if r.record.site_id == site and r.record.product_id == product_id]
    if not own:
        raise LookupError(f"product {product_id!r} has no ratings on site {site}")
    if len(own) < min_ratings:
        raise LookupError(f"product {product_id!r} has {len(own)} < {min_ratings} ratings on site {site}")
    return min(own, key=lambda r: r.order_key)


def build_population(
    product_pairs: Iterable[MatchPair],
    by_product: Mapping[tuple[str, str], Sequence[StandardizedRating]],
    min_ratings: int,
) -> list[MatchedProduct]:
    """Matched products with at least ``min_ratings`` ratings on both sites."""
    population = []
    for pair in product_pairs:
        seq_a = by_product.get(("A", pair.id_a), ())
        seq_b = by_product.get(("B", pair.id_b), ())
        if len(seq_a) < min_ratings or len(seq_b) < min_ratings:
            continue
        z_a = tuple(r.z for r in seq_a)
        z_b = tuple(r.z for r in seq_b)
        population.append(MatchedProduct(pair.id_a, pair.id_b, z_a[0], z_b[0], z_a, z_b))
    return sorted(population, key=lambda m: m.canonical_key)


def n_extreme(n: int, p: float) -> int:
    """ceil(p/100 * n), computed exactly on the decimal value of p."""
    return ceil(Fraction(str(p)) * n / 100)


def label_treatments(first: Mapping[str, StandardizedRating], p: float) -> dict[str, str]:
    """Label first ratings of one site: top share H, bottom share L, the rest M."""
    n = len(first)
    if n == 0:
        raise ValueError("cannot label treatments on an empty population")
    k = n_extreme(n, p)
    if 2 * k > n:
        raise ValueError(f"population of {n} too small for p={p}: {k} high and {k} low labels overlap")
    ranked = sorted(first, key=lambda pid: (-first[pid].z, first[pid].order_key))
    labels = {}
    for rank, pid in enumerate(ranked, start=1):
        labels[pid] = "H" if rank <= k else ("L" if rank > n - k else "M")
    return labels


def tied_boundaries(first: Mapping[str, StandardizedRating], p: float) -> list[str]:
    """Boundaries ("H/M", "M/L") whose labels were decided by the tie order rather than by z."""
    n = len(first)
    k = n_extreme(n, p)
    z = sorted((r.z for r in first.values()), reverse=True)
    out = []
    if 0 < k < n and z[k - 1] == z[k]:
        out.append("H/M")
    if 0 < n - k < n and z[n - k - 1] == z[n - k]:
        out.append("M/L")
    return out


def _first_by_site(population, by_product, config, site: str, attr: str) -> dict[str, StandardizedRating]:
    if config.label_population == "matched":
        keys = [getattr(m, attr) for m in population]
    else:
        keys = [pid for (s, pid), seq in by_product.items() if s == site and len(seq) >= config.min_ratings]
    return {pid: by_product[(site, pid)][0] for pid in keys}


def label_warnings(
    population: Sequence[MatchedProduct],
    by_product: Mapping[tuple[str, str], Sequence[StandardizedRating]],
    config: ExperimentConfig,
) -> list[dict]:
    """Degenerate-labeling records, one per site boundary settled by ties."""
    if not population:
        return []
    out = []
    for site, attr in (("A", "id_a"), ("B", "id_b")):
        for b in tied_boundaries(_first_by_site(population, by_product, config, site, attr), config.p):
            out.append({"group": "*", "analysis": f"labels_{site}", "reason": f"tied first ratings at the {b} boundary"})
    return out


def label_population(
    population: Sequence[MatchedProduct],
    by_product: Mapping[tuple[str, str], Sequence[StandardizedRating]],
    config: ExperimentConfig,
) -> tuple[dict[str, str], dict[str, str]]:
    """Per-site labels for every member of the population.

    With ``label_population="site"`` percentiles are taken over every product
    of the site that meets ``min_ratings``, matched or not.
    """
    labels = []
    for site, attr in (("A", "id_a"), ("B", "id_b")):
        first = _first_by_site(population, by_product, config, site, attr)
        site_labels = label_treatments(first, config.p) if first else {}
        labels.append({getattr(m, attr): site_labels[getattr(m, attr)] for m in population})
    return labels[0], labels[1]


def assign_groups(
    labels_a: Mapping[str, str], labels_b: Mapping[str, str], population: Iterable[MatchedProduct]
) -> dict[str, list[MatchedProduct]]:
    groups: dict[str, list[MatchedProduct]] = {g: [] for g in ORDERED_GROUPS}
    for m in sorted(population, key=lambda m: m.canonical_key):
        groups[labels_a[m.id_a] + labels_b[m.id_b]].append(m)
    return groups


def group_matrix(groups: Mapping[str, Sequence[MatchedProduct]]) -> dict[str, dict[str, int]]:
    """Counts indexed [label on B][label on A]."""
    return {lb: {la: len(groups.get(la + lb, ())) for la in LABELS} for lb in LABELS}


def balance_groups(groups: Mapping[str, Sequence[MatchedProduct]], seed: int) -> dict[str, list[MatchedProduct]]:
    """Subsample the larger of each T1T2/T2T1 pair down to the smaller's size."""
    out = {g: sorted(groups.get(g, ()), key=lambda m: m.canonical_key) for g in ORDERED_GROUPS}
    for key in ASYMMETRIC_GROUPS:
        g1, g2 = key, key[::-1]
        n1, n2 = len(out[g1]), len(out[g2])
        if n1 == n2:
            continue
        big = g1 if n1 > n2 else g2
        # the seed depends only on the unordered pair, so relabeling sites gives the same subsample
        rng = np.random.default_rng([seed, GROUP_CODES[key]])
        keep = np.sort(rng.choice(len(out[big]), size=min(n1, n2), replace=False))
        out[big] = [out[big][i] for i in keep]
    return out


def _higher_site(label_a: str, label_b: str, m: MatchedProduct) -> str:
    if _LEVEL[label_a] != _LEVEL[label_b]:
        return "A" if _LEVEL[label_a] > _LEVEL[label_b] else "B"
    # symmetric groups: the side with the larger first rating counts as higher
    return "B" if m.first_b > m.first_a else "A"


def aggregate_groups(balanced: Mapping[str, Sequence[MatchedProduct]]) -> dict[str, list[Assigned]]:
    out: dict[str, list[Assigned]] = {g: [] for g in AGGREGATED_GROUPS}
    for g in ORDERED_GROUPS:
        la, lb = g[0], g[1]
        for m in balanced.get(g, ()):
            out[aggregated_key(la, lb)].append(Assigned(m, la, lb, _higher_site(la, lb, m)))
    for g in out:
        out[g].sort(key=lambda a: a.product.canonical_key)
    return out


def disaggregate(aggregated: Mapping[str, Sequence[Assigned]]) -> dict[str, list[MatchedProduct]]:
    """Recover balanced ordered groups from aggregated membership."""
    out: dict[str, list[MatchedProduct]] = {g: [] for g in ORDERED_GROUPS}
    for members in aggregated.values():
        for a in members:
            out[a.ordered_group].append(a.product)
    for g in out:
        out[g].sort(key=lambda m: m.canonical_key)
    return out


def site_split(members: Sequence[Assigned]) -> tuple[int, int]:
    """Number of members whose higher treatment was on site A and on site B."""
    n_a = sum(a.higher_site == "A" for a in members)
    return n_a, len(members) - n_a


def attach_sequences(
    members: Iterable[MatchedProduct] | Iterable[Assigned],
    by_product: Mapping[tuple[str, str], Sequence[StandardizedRating]],
):
    """Re-attach standardized rating sequences to members read back from disk."""
    out = []
    for item in members:
        m = item.product if isinstance(item, Assigned) else item
        z_a = tuple(r.z for r in by_product.get(("A", m.id_a), ()))
        z_b = tuple(r.z for r in by_product.get(("B", m.id_b), ()))
        full = replace(m, z_a=z_a, z_b=z_b)
        out.append(replace(item, product=full) if isinstance(item, Assigned) else full)
    return out


@dataclass
class Experiment:
    population: list[MatchedProduct]
    labels_a: dict[str, str]
    labels_b: dict[str, str]
    groups: dict[str, list[MatchedProduct]]
    balanced: dict[str, list[MatchedProduct]]
    aggregated: dict[str, list[Assigned]]


def run_experiment(
    product_pairs: Iterable[MatchPair],
    by_product: Mapping[tuple[str, str], Sequence[StandardizedRating]],
    config: ExperimentConfig,
) -> Experiment:
    population = build_population(product_pairs, by_product, config.min_ratings)
    if population:
        labels_a, labels_b = label_population(population, by_product, config)
    else:
        labels_a, labels_b = {}, {}
    groups = assign_groups(labels_a, labels_b, population)
    balanced = balance_groups(groups, config.balance_seed)
    return Experiment(population, labels_a, labels_b, groups, balanced, aggregate_groups(balanced))


def matched_summary(
    product_pairs: Iterable[MatchPair],
    catalog: Iterable[CatalogEntry],
    ratings: Iterable[RatingRecord],
    thresholds: Sequence[int] = (0, 5, 10, 20),
) -> dict[int, dict[str, int]]:
    """Matched dataset size by minimum number of ratings on both sites."""
    index = {e.key: e for e in catalog}
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for r in ratings:
        counts[(r.site_id, r.product_id)] += 1
    pairs = list(product_pairs)
    out = {}
    for t in thresholds:
        kept = [p for p in pairs if min(counts[("A", p.id_a)], counts[("B", p.id_b)]) >= t]
        out[t] = {
            "producers": len({(index[("A", p.id_a)].producer_id, index[("B", p.id_b)].producer_id) for p in kept}),
            "products": len(kept),
            "ratings_a": sum(counts[("A", p.id_a)] for p in kept),
            "ratings_b": sum(counts[("B", p.id_b)] for p in kept),
        }
    return out


# --- file exports -----------------------------------------------------------

GROUP_COLUMNS = ["id_a", "id_b", "label_a", "label_b", "group", "first_a", "first_b"]
MEMBERSHIP_COLUMNS = ["group", "ordered_group", "id_a", "id_b", "label_a", "label_b", "higher_site", "first_a", "first_b"]


def write_group_matrix_csv(path: str | Path, groups: Mapping[str, Sequence[MatchedProduct]]) -> None:
    matrix = group_matrix(groups)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label_b\\label_a", *LABELS])
        for lb in LABELS:
            w.writerow([lb, *(matrix[lb][la] for la in LABELS)])


def write_groups_csv(path: str | Path, groups: Mapping[str, Sequence[MatchedProduct]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GROUP_COLUMNS)
        for g in ORDERED_GROUPS:
            for m in groups.get(g, ()):
                w.writerow([m.id_a, m.id_b, g[0], g[1], g, repr(m.first_a), repr(m.first_b)])


def read_groups_csv(path: str | Path) -> dict[str, list[MatchedProduct]]:
    groups: dict[str, list[MatchedProduct]] = {g: [] for g in ORDERED_GROUPS}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            m = MatchedProduct(row["id_a"], row["id_b"], float(row["first_a"]), float(row["first_b"]))
            groups[row["group"]].append(m)
    return groups


def write_membership_csv(path: str | Path, aggregated: Mapping[str, Sequence[Assigned]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEMBERSHIP_COLUMNS)
        for g in AGGREGATED_GROUPS:
            for a in aggregated.get(g, ()):
                m = a.product
                w.writerow([g, a.ordered_group, m.id_a, m.id_b, a.label_a, a.label_b, a.higher_site,
                            repr(m.first_a), repr(m.first_b)])


def read_membership_csv(path: str | Path) -> dict[str, list[Assigned]]:
    out: dict[str, list[Assigned]] = {g: [] for g in AGGREGATED_GROUPS}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            m = MatchedProduct(row["id_a"], row["id_b"], float(row["first_a"]), float(row["first_b"]))
            out[row["group"]].append(Assigned(m, row["label_a"], row["label_b"], row["higher_site"]))
    return out
