"""Precision-first cross-site alignment of producers and products.

Producers are aligned first (names + exact location); products are then
aligned only inside aligned producer pairs (names with producer tokens
removed + equal ABV). Both levels share one greedy procedure: iterate over
the smaller side, keep the best candidate only if it clears the similarity
threshold and beats the runner-up by the ambiguity gap, and drop every pair
whose larger-side element was claimed more than once.
"""

from __future__ import annotations

import csv
import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Hashable, Iterable, Sequence

from .ingest import CatalogEntry

_SPLIT = re.compile(r"[\W_]+")
# Similarities are rounded so identical vectors score exactly 1.0 and ties compare equal.
_SIM_DIGITS = 12

NameVector = dict[str, float]


@dataclass(frozen=True)
class MatchConfig:
    theta: float = 0.8
    delta: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (0, 1], got {self.theta}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")


@dataclass(frozen=True)
class MatchPair:
    level: str  # "producer" or "product"
    id_a: str
    id_b: str
    similarity: float
    gap: float


@dataclass(frozen=True)
class Named:
    """An entity ready for matching: its site, id, name vector and constraint attribute."""

    site: str
    id: str
    vector: NameVector
    attr: Hashable = None


def tokenize(name: str) -> list[str]:
    text = unicodedata.normalize("NFKD", name)
    text = "".join(c for c in text if not unicodedata.combining(c))
    text = unicodedata.normalize("NFKD", text.casefold())
    text = "".join(c for c in text if not unicodedata.combining(c))
    return [t for t in _SPLIT.split(text) if t]


class NameVectorizer:
    """TF-IDF with smoothed idf: ln((1 + N) / (1 + df)) + 1, raw term counts, L2 norm."""

    def __init__(self, corpus: Sequence[Sequence[str]]):
        if not corpus:
            raise ValueError("corpus must be non-empty")
        self.n_docs = len(corpus)
        self.df = Counter(t for doc in corpus for t in set(doc))

    def idf(self, token: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df.get(token, 0))) + 1.0

    def transform(self, tokens: Sequence[str]) -> NameVector:
        tf = Counter(tokens)
        weights = {t: n * self.idf(t) for t, n in sorted(tf.items())}
        norm = math.sqrt(math.fsum(w * w for w in weights.values()))
        if norm == 0.0:
            return {}
        return {t: w / norm for t, w in weights.items()}


def build_tfidf(corpus: Sequence[Sequence[str]]) -> NameVectorizer:
    return NameVectorizer(corpus)


def cosine(u: NameVector, v: NameVector) -> float:
    if not u or not v:
        return 0.0
    if len(v) < len(u):
        u, v = v, u
    dot = math.fsum(w * v[t] for t, w in sorted(u.items()) if t in v)
    return round(min(max(dot, 0.0), 1.0), _SIM_DIGITS)


def greedy_match(
    smaller: Sequence[Named],
    larger: Sequence[Named],
    config: MatchConfig,
    constraint: Callable[[Named, Named], bool] | None = None,
    *,
    level: str = "product",
    block: Callable[[Named], Hashable] | None = None,
) -> list[MatchPair]:
    """Greedy best-candidate matching with ambiguity-gap and conflict discard.

    ``block`` optionally partitions candidates; it must never separate a pair
    that ``constraint`` would accept.
    """
    if block is None:
        buckets = {None: sorted(larger, key=lambda e: e.id)}
    else:
        buckets = defaultdict(list)
        for e in sorted(larger, key=lambda e: e.id):
            buckets[block(e)].append(e)

    kept: list[tuple[Named, Named, float, float]] = []
    for s in sorted(smaller, key=lambda e: e.id):
        candidates = buckets.get(None if block is None else block(s), [])
        best = second = 0.0
        best_entity = None
        for c in candidates:
            if constraint is not None and not constraint(s, c):
                continue
            sim = cosine(s.vector, c.vector)
            if best_entity is None or sim > best:
                if best_entity is not None:
                    second = best
                best, best_entity = sim, c
            elif sim > second:
                # an exact tie with the best lands here and forces a zero gap
                second = sim
        if best_entity is None:
            continue
        gap = round(best - second, _SIM_DIGITS)
        if best >= config.theta and gap >= config.delta:
            kept.append((s, best_entity, best, gap))

    claims = Counter(c.id for _, c, _, _ in kept)
    pairs = []
    for s, c, sim, gap in kept:
        if claims[c.id] > 1:
            continue
        a, b = (s, c) if s.site == "A" else (c, s)
        pairs.append(MatchPair(level, a.id, b.id, sim, gap))
    return sorted(pairs, key=lambda p: (p.id_a, p.id_b))


def _orient(entities_a: list[Named], entities_b: list[Named]) -> tuple[list[Named], list[Named]]:
    # Ties in size iterate over site A.
    if len(entities_b) < len(entities_a):
        return entities_b, entities_a
    return entities_a, entities_b


def _norm_location(loc: str) -> str:
    return loc.strip().casefold()


def _producers(catalog: Iterable[CatalogEntry], site: str) -> dict[str, CatalogEntry]:
    out: dict[str, CatalogEntry] = {}
    for e in sorted(catalog, key=lambda e: e.product_id):
        if e.site_id == site:
            out.setdefault(e.producer_id, e)
    return out


def match_producers(
    catalog_a: Iterable[CatalogEntry], catalog_b: Iterable[CatalogEntry], config: MatchConfig
) -> list[MatchPair]:
    prod_a = _producers(catalog_a, "A")
    prod_b = _producers(catalog_b, "B")
    if not prod_a or not prod_b:
        return []
    tokens = {("A", k): tokenize(e.producer_name) for k, e in prod_a.items()}
    tokens.update({("B", k): tokenize(e.producer_name) for k, e in prod_b.items()})
    vec = build_tfidf([tokens[k] for k in sorted(tokens)])
    ents_a = [Named("A", k, vec.transform(tokens[("A", k)]), _norm_location(e.producer_location))
              for k, e in prod_a.items()]
    ents_b = [Named("B", k, vec.transform(tokens[("B", k)]), _norm_location(e.producer_location))
              for k, e in prod_b.items()]
    smaller, larger = _orient(ents_a, ents_b)
    return greedy_match(
        smaller, larger, config, lambda s, c: s.attr == c.attr, level="producer", block=lambda e: e.attr
    )


def product_tokens(entry: CatalogEntry) -> list[str]:
    """Product-name tokens with every token of the producer's own name removed."""
    drop = set(tokenize(entry.producer_name))
    return [t for t in tokenize(entry.product_name) if t not in drop]


def _abv_key(abv: float | None) -> float | None:
    return None if abv is None else round(abv, 1)


def _abv_equal(s: Named, c: Named) -> bool:
    return s.attr is not None and c.attr is not None and s.attr == c.attr


def product_vectorizer(*catalogs: Iterable[CatalogEntry]) -> NameVectorizer:
    entries = sorted((e for cat in catalogs for e in cat), key=lambda e: e.key)
    return build_tfidf([product_tokens(e) for e in entries])


def match_products(
    producer_pair: MatchPair,
    beers_a: Sequence[CatalogEntry],
    beers_b: Sequence[CatalogEntry],
    config: MatchConfig,
    vectorizer: NameVectorizer | None = None,
) -> list[MatchPair]:
    """Align the products of one matched producer pair.

    ``vectorizer`` should be fitted on the product names of both full
    catalogs; if omitted, it is fitted on the two product lists given.
    """
    beers_a = [e for e in beers_a if e.producer_id == producer_pair.id_a]
    beers_b = [e for e in beers_b if e.producer_id == producer_pair.id_b]
    if not beers_a or not beers_b:
        return []
    if vectorizer is None:
        vectorizer = product_vectorizer(beers_a, beers_b)
    ents_a = [Named("A", e.product_id, vectorizer.transform(product_tokens(e)), _abv_key(e.abv)) for e in beers_a]
    ents_b = [Named("B", e.product_id, vectorizer.transform(product_tokens(e)), _abv_key(e.abv)) for e in beers_b]
    smaller, larger = _orient(ents_a, ents_b)
    return greedy_match(smaller, larger, config, _abv_equal, level="product")


def match_catalogs(
    catalog_a: Sequence[CatalogEntry], catalog_b: Sequence[CatalogEntry], config: MatchConfig | None = None
) -> tuple[list[MatchPair], list[MatchPair]]:
    """Two-phase matching; returns (producer pairs, product pairs)."""
    config = config or MatchConfig()
    catalog_a = [e for e in catalog_a if e.site_id == "A"]
    catalog_b = [e for e in catalog_b if e.site_id == "B"]
    producer_pairs = match_producers(catalog_a, catalog_b, config)
    if not producer_pairs:
        return producer_pairs, []
    vectorizer = product_vectorizer(catalog_a, catalog_b)
    by_producer_a: dict[str, list[CatalogEntry]] = defaultdict(list)
    by_producer_b: dict[str, list[CatalogEntry]] = defaultdict(list)
    for e in catalog_a:
        by_producer_a[e.producer_id].append(e)
    for e in catalog_b:
        by_producer_b[e.producer_id].append(e)
    product_pairs = []
    for pp in producer_pairs:
        product_pairs.extend(
            match_products(pp, by_producer_a[pp.id_a], by_producer_b[pp.id_b], config, vectorizer)
        )
    return producer_pairs, sorted(product_pairs, key=lambda p: (p.id_a, p.id_b))


def evaluate_matching(
    pairs: Iterable[MatchPair | tuple[str, str]], truth: Iterable[tuple[str, str]]
) -> tuple[float | None, float | None]:
    """Precision and recall against known alignments; None where undefined."""
    emitted = {(p.id_a, p.id_b) if isinstance(p, MatchPair) else tuple(p) for p in pairs}
    truth = {tuple(t) for t in truth}
    correct = len(emitted & truth)
    precision = correct / len(emitted) if emitted else None
    recall = correct / len(truth) if truth else None
    return precision, recall


PAIR_COLUMNS = ["level", "id_a", "id_b", "similarity", "gap"]


def write_pairs_csv(path: str | Path, producer_pairs: Sequence[MatchPair], product_pairs: Sequence[MatchPair]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_COLUMNS)
        for p in list(producer_pairs) + list(product_pairs):
            w.writerow([p.level, p.id_a, p.id_b, repr(p.similarity), repr(p.gap)])


def read_pairs_csv(path: str | Path) -> tuple[list[MatchPair], list[MatchPair]]:
    producers, products = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            p = MatchPair(row["level"], row["id_a"], row["id_b"], float(row["similarity"]), float(row["gap"]))
            (producers if p.level == "producer" else products).append(p)
    return producers, products
