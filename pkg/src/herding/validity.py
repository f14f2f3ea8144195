"""External- and internal-validity evidence for the matched experiment."""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import binomtest

from .ingest import CatalogEntry, RatingRecord
from .match import MatchPair
from .natexp import ASYMMETRIC_GROUPS, Assigned

# Only pre-treatment catalog fields may be used as covariates; never anything rating-derived.
INTERNAL_ATTRIBUTES = ("style", "producer_location")
FLAG_P = 0.05
FLAG_MIN_COUNT = 20


def distribution(values: Iterable[str]) -> dict[str, float]:
    counts = Counter(values)
    total = sum(counts.values())
    return {k: counts[k] / total for k in sorted(counts)} if total else {}


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in sorted(keys))


def five_numbers(values: Sequence[float]) -> dict[str, float] | None:
    if len(values) == 0:
        return None
    q = np.quantile(np.asarray(values, dtype=float), [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(("min", "q25", "median", "q75", "max"), (float(x) for x in q)))


@dataclass
class AttributeComparison:
    attribute: str
    unit: str  # what is being counted: "producer" or "product"
    full: dict[str, float]
    matched: dict[str, float]
    tvd: float
    top: list[dict] = field(default_factory=list)


@dataclass
class SiteExternal:
    site: str
    n_products: int
    n_products_matched: int
    attributes: list[AttributeComparison]
    quantiles: dict[str, dict[str, dict[str, float] | None]]


@dataclass
class ExternalValidityReport:
    sites: list[SiteExternal]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ValidityRow:
    attribute: str
    value: str
    n: int
    count_a: int
    count_b: int
    pr_a: float
    pr_b: float
    p_value: float
    flagged: bool


@dataclass
class GroupInternal:
    group: str
    n: int
    count_a: int
    count_b: int
    pr_a: float | None
    pr_b: float | None
    rows: list[ValidityRow]


@dataclass
class InternalValidityReport:
    attribute_site: str
    groups: list[GroupInternal]

    def to_dict(self) -> dict:
        return asdict(self)

    def all_rows(self) -> list[ValidityRow]:
        return [r for g in self.groups for r in g.rows]


def _top_rows(full: Mapping[str, float], matched: Mapping[str, float], top_k: int | None) -> list[dict]:
    keys = sorted(set(full) | set(matched), key=lambda k: (-matched.get(k, 0.0), k))
    if top_k is not None:
        keys = keys[:top_k]
    return [{"value": k, "full": full.get(k, 0.0), "matched": matched.get(k, 0.0)} for k in keys]


def external_validity(
    catalogs: Sequence[CatalogEntry],
    ratings: Sequence[RatingRecord],
    product_pairs: Sequence[MatchPair],
    top_k: int | None = 10,
) -> ExternalValidityReport:
    """Compare each site's full catalog with its matched subset."""
    per_product: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in ratings:
        per_product[(r.site_id, r.product_id)].append(r.score)
    matched_ids = {"A": {p.id_a for p in product_pairs}, "B": {p.id_b for p in product_pairs}}

    sites = []
    for site in ("A", "B"):
        entries = sorted((e for e in catalogs if e.site_id == site), key=lambda e: e.product_id)
        matched = [e for e in entries if e.product_id in matched_ids[site]]
        producers_full = {e.producer_id: e.producer_location for e in entries}
        producers_matched = {e.producer_id: e.producer_location for e in matched}

        attrs = []
        for attr, unit, full_vals, matched_vals in (
            ("producer_location", "producer", producers_full.values(), producers_matched.values()),
            ("style", "product", [e.style for e in entries], [e.style for e in matched]),
        ):
            p, q = distribution(full_vals), distribution(matched_vals)
            attrs.append(AttributeComparison(attr, unit, p, q, total_variation(p, q) if q else 0.0,
                                             _top_rows(p, q, top_k)))

        def props(subset: Sequence[CatalogEntry]) -> dict[str, list[float]]:
            scores = [per_product.get((site, e.product_id), []) for e in subset]
            per_producer = Counter(e.producer_id for e in subset)
            return {
                "mean_rating": [float(np.mean(s)) for s in scores if s],
                "ratings_per_product": [float(len(s)) for s in scores],
                "products_per_producer": [float(per_producer[k]) for k in sorted(per_producer)],
            }

        full_props, matched_props = props(entries), props(matched)
        quantiles = {
            name: {"full": five_numbers(full_props[name]), "matched": five_numbers(matched_props[name])}
            for name in full_props
        }
        sites.append(SiteExternal(site, len(entries), len(matched), attrs, quantiles))
    return ExternalValidityReport(sites)


def _probabilities(count_a: int, count_b: int) -> tuple[float | None, float | None]:
    n = count_a + count_b
    return (count_a / n, count_b / n) if n else (None, None)


def internal_validity(
    aggregated: Mapping[str, Sequence[Assigned]],
    catalogs: Sequence[CatalogEntry],
    top_k: int | None = 10,
    attribute_site: str = "A",
) -> InternalValidityReport:
    """Higher-treatment counts per site for the most frequent attribute values.

    Attribute values are read from the catalog of ``attribute_site``. Rows
    with ``n >= 20`` and an exact two-sided binomial p-value below 0.05 are
    flagged.
    """
    index = {e.key: e for e in catalogs}
    groups = []
    for g in ASYMMETRIC_GROUPS:
        members = aggregated.get(g, ())
        per_value: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0])
        for a in members:
            pid = a.product.id_a if attribute_site == "A" else a.product.id_b
            entry = index[(attribute_site, pid)]
            for attr in INTERNAL_ATTRIBUTES:
                per_value[(attr, getattr(entry, attr))][0 if a.higher_site == "A" else 1] += 1
        rows = []
        for attr in INTERNAL_ATTRIBUTES:
            values = [(v, c) for (at, v), c in per_value.items() if at == attr]
            values.sort(key=lambda vc: (-(vc[1][0] + vc[1][1]), vc[0]))
            if top_k is not None:
                values = values[:top_k]
            for value, (ca, cb) in values:
                n = ca + cb
                pr_a, pr_b = _probabilities(ca, cb)
                p_value = float(binomtest(ca, n, 0.5).pvalue)
                rows.append(ValidityRow(attr, value, n, ca, cb, pr_a, pr_b, p_value,
                                        p_value < FLAG_P and n >= FLAG_MIN_COUNT))
        ca = sum(a.higher_site == "A" for a in members)
        cb = len(members) - ca
        pr_a, pr_b = _probabilities(ca, cb)
        groups.append(GroupInternal(g, len(members), ca, cb, pr_a, pr_b, rows))
    return InternalValidityReport(attribute_site, groups)


def write_report(path: str | Path, report: ExternalValidityReport | InternalValidityReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def write_location_table(path: str | Path, report: ExternalValidityReport, attribute: str = "producer_location") -> None:
    """Top attribute values before/after matching, one column pair per site."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "value", "full", "matched"])
        for s in report.sites:
            comp = next(c for c in s.attributes if c.attribute == attribute)
            for row in comp.top:
                w.writerow([s.site, row["value"], repr(row["full"]), repr(row["matched"])])


def write_internal_table(path: str | Path, report: InternalValidityReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "attribute", "value", "n", "count_a", "count_b", "pr_a", "pr_b", "p_value", "flagged"])
        for g in report.groups:
            for r in g.rows:
                w.writerow([g.group, r.attribute, r.value, r.n, r.count_a, r.count_b,
                            repr(r.pr_a), repr(r.pr_b), repr(r.p_value), int(r.flagged)])
