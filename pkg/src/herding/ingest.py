"""Loading, validation and summary counts for two-site rating datasets.

Both file types are line-delimited JSON (one record per line, UTF-8).
Unknown fields are ignored; the field names below are normative.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

SITES = ("A", "B")

CATALOG_FIELDS = (
    "site_id",
    "product_id",
    "product_name",
    "producer_id",
    "producer_name",
    "producer_location",
    "style",
    "abv",
)
RATING_FIELDS = ("site_id", "product_id", "user_id", "timestamp", "score")

SCORE_MIN = 1.0
SCORE_MAX = 5.0


class IngestError(ValueError):
    """Raised for malformed or inconsistent input files."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class DuplicateKeyError(IngestError):
    pass


@dataclass(frozen=True, slots=True)
class RatingRecord:
    site_id: str
    product_id: str
    user_id: str
    timestamp: int
    score: float

    @property
    def order_key(self) -> tuple:
        # Total order within a site: ties on timestamp go to the smaller user_id, then score.
        return (self.site_id, self.product_id, self.timestamp, self.user_id, self.score)


@dataclass(frozen=True, slots=True)
class CatalogEntry:
    site_id: str
    product_id: str
    product_name: str
    producer_id: str
    producer_name: str
    producer_location: str
    style: str
    abv: float | None = None  # None means unavailable; 0.0 is a legal ABV

    @property
    def key(self) -> tuple[str, str]:
        return (self.site_id, self.product_id)


@dataclass
class SiteSummary:
    producers: int = 0
    products: int = 0
    products_min5: int = 0
    products_min10: int = 0
    products_min20: int = 0
    users: int = 0
    users_min10: int = 0
    users_min100: int = 0
    ratings: int = 0


@dataclass
class DatasetSummary:
    sites: dict[str, SiteSummary] = field(default_factory=dict)

    def as_dict(self) -> dict[str, dict[str, int]]:
        return {s: dict(vars(c)) for s, c in sorted(self.sites.items())}


def _check_site(value, path, line) -> str:
    if value not in SITES:
        raise IngestError(f"site_id must be one of {SITES}, got {value!r}", path=path, line=line)
    return value


def _require_str(rec: dict, name: str, path, line) -> str:
    if name not in rec or rec[name] is None:
        raise IngestError(f"missing required field {name!r}", path=path, line=line)
    value = rec[name]
    if not isinstance(value, str):
        raise IngestError(f"field {name!r} must be a string", path=path, line=line)
    return value


def _iter_json_lines(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise IngestError(f"parse error: {exc.msg}", path=str(path), line=lineno) from None
            if not isinstance(rec, dict):
                raise IngestError("record is not an object", path=str(path), line=lineno)
            yield lineno, rec


def parse_catalog_record(rec: dict, *, path: str | None = None, line: int | None = None) -> CatalogEntry:
    site = _check_site(_require_str(rec, "site_id", path, line), path, line)
    values = {name: _require_str(rec, name, path, line) for name in CATALOG_FIELDS[1:-1]}
    if not values["product_name"].strip():
        raise IngestError("product_name is empty", path=path, line=line)
    abv = rec.get("abv")
    if abv is not None:
        if isinstance(abv, bool) or not isinstance(abv, (int, float)) or not math.isfinite(abv):
            raise IngestError(f"abv must be a number or null, got {abv!r}", path=path, line=line)
        abv = float(abv)
    return CatalogEntry(site_id=site, abv=abv, **values)


def load_catalog(path: str | Path) -> list[CatalogEntry]:
    """Read a catalog file; duplicate (site_id, product_id) keys are rejected."""
    path = Path(path)
    if not path.exists():
        raise IngestError("file not found", path=str(path))
    entries: list[CatalogEntry] = []
    seen: dict[tuple[str, str], int] = {}
    for lineno, rec in _iter_json_lines(path):
        entry = parse_catalog_record(rec, path=str(path), line=lineno)
        if entry.key in seen:
            raise DuplicateKeyError(
                f"duplicate product_id {entry.product_id!r} for site {entry.site_id} "
                f"(first seen on line {seen[entry.key]})",
                path=str(path),
                line=lineno,
            )
        seen[entry.key] = lineno
        entries.append(entry)
    return entries


def catalog_index(catalog: Iterable[CatalogEntry]) -> dict[tuple[str, str], CatalogEntry]:
    index: dict[tuple[str, str], CatalogEntry] = {}
    for entry in catalog:
        if entry.key in index:
            raise DuplicateKeyError(f"duplicate product_id {entry.product_id!r} for site {entry.site_id}")
        index[entry.key] = entry
    return index


def parse_rating_record(rec: dict, *, path: str | None = None, line: int | None = None) -> RatingRecord:
    site = _check_site(_require_str(rec, "site_id", path, line), path, line)
    product_id = _require_str(rec, "product_id", path, line)
    user_id = _require_str(rec, "user_id", path, line)
    if "timestamp" not in rec:
        raise IngestError("missing required field 'timestamp'", path=path, line=line)
    ts = rec["timestamp"]
    if isinstance(ts, bool) or not isinstance(ts, int) or ts <= 0:
        raise IngestError(f"malformed timestamp {ts!r}: expected positive integer seconds", path=path, line=line)
    if "score" not in rec:
        raise IngestError("missing required field 'score'", path=path, line=line)
    score = rec["score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
        raise IngestError(f"malformed score {score!r}", path=path, line=line)
    if not SCORE_MIN <= score <= SCORE_MAX:
        raise IngestError(f"score {score!r} outside [{SCORE_MIN}, {SCORE_MAX}]", path=path, line=line)
    return RatingRecord(site, product_id, user_id, ts, float(score))


def sort_ratings(ratings: Iterable[RatingRecord]) -> list[RatingRecord]:
    return sorted(ratings, key=lambda r: r.order_key)


def load_ratings(
    path: str | Path,
    catalog: Iterable[CatalogEntry] | Mapping[tuple[str, str], CatalogEntry],
) -> list[RatingRecord]:
    """Read a ratings file, enforce referential integrity and return records in total order."""
    path = Path(path)
    if not path.exists():
        raise IngestError("file not found", path=str(path))
    known = catalog if isinstance(catalog, Mapping) else catalog_index(catalog)
    out = []
    for lineno, rec in _iter_json_lines(path):
        r = parse_rating_record(rec, path=str(path), line=lineno)
        if (r.site_id, r.product_id) not in known:
            raise IngestError(
                f"unknown product_id {r.product_id!r} for site {r.site_id}", path=str(path), line=lineno
            )
        out.append(r)
    return sort_ratings(out)


def write_catalog(path: str | Path, catalog: Iterable[CatalogEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in catalog:
            rec = {name: getattr(e, name) for name in CATALOG_FIELDS}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def write_ratings(path: str | Path, ratings: Iterable[RatingRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in ratings:
            rec = {name: getattr(r, name) for name in RATING_FIELDS}
            fh.write(json.dumps(rec) + "\n")


def group_by_product(ratings: Iterable[RatingRecord]) -> dict[tuple[str, str], list[RatingRecord]]:
    """Map (site_id, product_id) to that product's ratings in total order."""
    groups: dict[tuple[str, str], list[RatingRecord]] = defaultdict(list)
    for r in sort_ratings(ratings):
        groups[(r.site_id, r.product_id)].append(r)
    return dict(groups)


def summarize(catalogs: Sequence[CatalogEntry], ratings: Sequence[RatingRecord]) -> DatasetSummary:
    """Per-site dataset size counts with the thresholds used in the dataset tables."""
    summary = DatasetSummary({s: SiteSummary() for s in SITES})
    producers: dict[str, set[str]] = defaultdict(set)
    products: Counter = Counter()
    for e in catalogs:
        producers[e.site_id].add(e.producer_id)
        products[e.site_id] += 1
    per_product: Counter = Counter((r.site_id, r.product_id) for r in ratings)
    per_user: Counter = Counter((r.site_id, r.user_id) for r in ratings)
    for site, counts in summary.sites.items():
        counts.producers = len(producers[site])
        counts.products = products[site]
        prod_counts = [n for (s, _), n in per_product.items() if s == site]
        user_counts = [n for (s, _), n in per_user.items() if s == site]
        counts.products_min5 = sum(n >= 5 for n in prod_counts)
        counts.products_min10 = sum(n >= 10 for n in prod_counts)
        counts.products_min20 = sum(n >= 20 for n in prod_counts)
        counts.users = len(user_counts)
        counts.users_min10 = sum(n >= 10 for n in user_counts)
        counts.users_min100 = sum(n >= 100 for n in user_counts)
        counts.ratings = sum(prod_counts)
    return summary
