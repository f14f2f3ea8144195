"""Synthetic two-site catalogs and rating streams with a known herding coefficient.

Latent model, per product p and site s (ratings indexed from 1)::

    z_1 = q_p + e_1
    z_i = (1 - h) * (q_p + e_i) + h * anchor_i          (i >= 2)

where ``anchor_i`` is the mean of z_1..z_{i-1} (default) or z_1 alone.
Raw scores are ``clamp(mu_{s,t} + sigma_{s,t} * z / sqrt(sigma_q^2 + sigma_e^2), 1, 5)``
so that ``sigma_{s,t}`` is the raw-score spread in year t.
"""

from __future__ import annotations

import csv
import unicodedata
import zlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .ingest import CatalogEntry, RatingRecord, write_catalog, write_ratings

# name material ---------------------------------------------------------------

_WORDS = """
Amber Anchor Antler Arrow Aspen Badger Barrel Basin Beacon Bear Bell Birch Bishop
Black Blue Bluff Boulder Bramble Bridge Bright Broken Buffalo Cairn Canyon Cardinal
Cedar Chapel Cinder Cliff Cloud Clover Cobble Comet Copper Coral Cotton Coyote Crane
Creek Crimson Crown Crow Cypress Dawn Deer Delta Desert Drift Dune Eagle Echo Elder
Elk Ember Falcon Fern Field Finch Fire Flint Fog Forest Fox Frost Garnet Ghost Glacier
Golden Granite Grey Grove Gull Harbor Hare Hawk Hazel Heron Hickory Hollow Honey Horizon
Iron Ivy Jade Juniper Kestrel Lantern Lark Laurel Ledge Lichen Lion Lost Lotus Lynx
Maple Marsh Meadow Mesa Mill Mint Mist Monarch Moon Moose Moss Mountain Nettle North
Oak Ocean Orchard Osprey Otter Owl Pebble Pine Plum Prairie Quarry Quill Raven Red
Reef Ridge River Robin Rock Rose Rowan Rust Sage Salt Sand Sequoia Shadow Shore Silver
Sky Slate Smoke Snow Sparrow Spruce Star Stone Storm Summit Sun Swan Thistle Thorn
Thunder Tide Timber Trail Tundra Valley Vine Violet Wander Wave Whale Wild Willow Wind
Wolf Wren Yarrow Zephyr Rhino Heron Kodiak Magpie Marten Pelican Puffin Saber Tamarack
""".split()

_ACCENTED = """
Ingobräu Zötler Störtebeker Mühlen Königs Schönbrunn Härtsfeld Göller Brügge Dupré
Château Señor Peñón Cerveceria Ålborg Smørrebrød Tønder Bræddy Løve Ørsted Fürsten
Kühbach Weißen Überlinger Jäger Zwönitz Brünnen Hölzl Rügen Säntis
""".split()

_PRODUCER_SUFFIXES = (
    "Brewing Company", "Brewery", "Brewing", "Brewing Co.", "Beer Company", "Brewhouse",
    "Bräu", "Ales", "Craft Brewery", "Beerworks",
)
_PRODUCER_GENERIC = ("Brewery", "Brewing", "Company", "Co.")
_PRODUCT_GENERIC = ("Ale", "Beer", "Brew")

DEFAULT_STYLES: tuple[tuple[str, str, float], ...] = (
    # (style, short name used in product names, sampling weight)
    ("American IPA", "IPA", 11.0),
    ("American Double / Imperial IPA", "Double IPA", 8.0),
    ("American Pale Ale", "Pale Ale", 7.0),
    ("Saison / Farmhouse Ale", "Saison", 5.0),
    ("American Wild Ale", "Wild Ale", 4.0),
    ("American Double / Imperial Stout", "Imperial Stout", 4.0),
    ("American Porter", "Porter", 3.5),
    ("Fruit / Vegetable Beer", "Fruit Beer", 3.0),
    ("American Amber / Red Ale", "Amber", 3.0),
    ("American Stout", "Stout", 3.0),
    ("Russian Imperial Stout", "Russian Imperial", 2.5),
    ("American Blonde Ale", "Blonde", 2.5),
    ("German Pilsener", "Pils", 2.5),
    ("American Pale Wheat Ale", "Wheat", 2.0),
    ("Hefeweizen", "Hefeweizen", 2.0),
    ("Belgian Strong Dark Ale", "Quad", 1.5),
    ("Witbier", "Wit", 1.5),
    ("Munich Helles Lager", "Helles", 1.5),
    ("English Bitter", "Bitter", 1.0),
    ("Gose", "Gose", 1.0),
)

DEFAULT_LOCATIONS: tuple[tuple[str, float], ...] = (
    ("California", 9.0), ("Colorado", 5.0), ("Oregon", 4.0), ("Michigan", 4.0),
    ("New York", 4.0), ("Pennsylvania", 3.5), ("Washington", 3.5), ("Texas", 3.0),
    ("Vermont", 2.0), ("Ohio", 2.5), ("Germany", 8.5), ("England", 6.0), ("Canada", 5.0),
    ("Belgium", 2.5), ("Italy", 2.5), ("France", 2.4), ("Spain", 2.0), ("Australia", 2.3),
    ("Netherlands", 1.8), ("Denmark", 1.5), ("Sweden", 1.2), ("Scotland", 1.0),
    ("New Zealand", 1.0),
)


@dataclass(frozen=True)
class SiteConvention:
    """Raw-score convention of one site: yearly mean inflation and std deflation."""

    mean0: float
    std0: float
    inflation: float = 0.04
    deflation: float = 0.02
    std_floor: float = 0.2

    def __post_init__(self):
        if not self.std0 >= self.std_floor > 0:
            raise ValueError("need std0 >= std_floor > 0")

    def mean(self, year_index):
        return self.mean0 + self.inflation * np.asarray(year_index)

    def std(self, year_index):
        return np.maximum(self.std0 - self.deflation * np.asarray(year_index), self.std_floor)


@dataclass(frozen=True)
class CorruptionParams:
    fold_diacritics: float = 0.5
    reorder: float = 0.1
    generic_append: float = 0.2
    producer_prefix: float = 0.2

    @classmethod
    def none(cls) -> "CorruptionParams":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SimConfig:
    n_products: int = 4000
    shared_fraction: float = 0.6
    ratings_min: int = 1
    ratings_max: int = 120
    ratings_shape: float = 25.0  # mean number of ratings above ratings_min (geometric tail)
    h: float = 0.0
    sigma_q: float = 1.0
    sigma_e: float = 1.0
    anchor: str = "cumulative"  # or "first"
    site_a: SiteConvention = field(default_factory=lambda: SiteConvention(3.6, 0.45))
    site_b: SiteConvention = field(default_factory=lambda: SiteConvention(3.3, 0.6))
    start_year: int = 2010
    n_years: int = 6
    products_per_producer: float = 5.0
    styles: tuple = DEFAULT_STYLES
    locations: tuple = DEFAULT_LOCATIONS
    corruption: CorruptionParams = field(default_factory=CorruptionParams)
    abv_missing: float = 0.02
    users_per_site: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.h <= 1.0:
            raise ValueError(f"h must be in [0, 1], got {self.h}")
        if self.n_products < 1:
            raise ValueError("n_products must be >= 1")
        if not 0.0 <= self.shared_fraction <= 1.0:
            raise ValueError("shared_fraction must be in [0, 1]")
        if not 1 <= self.ratings_min <= self.ratings_max:
            raise ValueError("need 1 <= ratings_min <= ratings_max")
        if self.ratings_shape < 0:
            raise ValueError("ratings_shape must be >= 0")
        if self.sigma_q < 0 or self.sigma_e < 0 or self.sigma_q + self.sigma_e == 0:
            raise ValueError("latent stds must be nonnegative and not both zero")
        if self.anchor not in ("cumulative", "first"):
            raise ValueError(f"unknown anchor {self.anchor!r}")
        if self.n_years < 1:
            raise ValueError("n_years must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        for key in ("site_a", "site_b"):
            if isinstance(d.get(key), dict):
                d[key] = SiteConvention(**d[key])
        if isinstance(d.get("corruption"), dict):
            d["corruption"] = CorruptionParams(**d["corruption"])
        for key in ("styles", "locations"):
            if key in d:
                d[key] = tuple(tuple(x) for x in d[key])
        return cls(**d)


@dataclass
class GroundTruth:
    product_alignment: list[tuple[str, str]]
    producer_alignment: list[tuple[str, str]]
    quality: dict[tuple[str, str], float]  # (site, product_id) -> q_p
    latent: dict[tuple[str, str], np.ndarray]  # (site, product_id) -> latent z per rating


class Simulation(NamedTuple):
    catalog_a: list[CatalogEntry]
    catalog_b: list[CatalogEntry]
    ratings_a: list[RatingRecord]
    ratings_b: list[RatingRecord]
    truth: GroundTruth


# stream ids for independent generators
_S_STRUCTURE, _S_NAMES, _S_LATENT, _S_TIME, _S_USERS, _S_CORRUPT, _S_ABV = range(7)
_SITE_CODE = {"A": 0, "B": 1}


def _rng(seed: int, stream: int, site: str | None = None) -> np.random.Generator:
    key = [seed, stream] if site is None else [seed, stream, _SITE_CODE[site]]
    return np.random.default_rng(key)


def fold_diacritics(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return unicodedata.normalize("NFC", "".join(c for c in decomposed if not unicodedata.combining(c)))


def _weighted(rng: np.random.Generator, pool: Sequence, weights: Sequence[float], size: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    return rng.choice(len(pool), size=size, p=w / w.sum())


def _producer_names(rng: np.random.Generator, n: int) -> list[str]:
    first = _WORDS + _ACCENTED
    seen: set[tuple[str, str]] = set()
    names = []
    while len(names) < n:
        w1 = first[rng.integers(len(first))]
        w2 = _WORDS[rng.integers(len(_WORDS))]
        if w1 == w2 or (w1, w2) in seen:
            continue
        seen.add((w1, w2))
        suffix = _PRODUCER_SUFFIXES[rng.integers(len(_PRODUCER_SUFFIXES))]
        names.append(f"{w1} {w2} {suffix}")
    return names


def corrupt_names(catalog: Sequence[CatalogEntry], params: CorruptionParams, seed: int) -> list[CatalogEntry]:
    """Perturb producer and product names; ids, and hence any alignment, are untouched.

    Each corruption fires independently per producer (for producer names) or
    per product (for product names) with its configured probability.
    """
    rng = np.random.default_rng([seed, _S_CORRUPT])
    producer_names: dict[str, str] = {}
    for e in sorted(catalog, key=lambda e: e.product_id):
        if e.producer_id not in producer_names:
            producer_names[e.producer_id] = e.producer_name
    for pid in sorted(producer_names):
        producer_names[pid] = _corrupt(rng, producer_names[pid], params, _PRODUCER_GENERIC, prefix=None)

    out = []
    for e in catalog:
        # products draw from a per-product stream so catalog order does not matter
        prng = np.random.default_rng([seed, _S_CORRUPT, 1, zlib.crc32(e.product_id.encode())])
        name = _corrupt(prng, e.product_name, params, _PRODUCT_GENERIC, prefix=producer_names[e.producer_id])
        out.append(replace(e, product_name=name, producer_name=producer_names[e.producer_id]))
    return out


def _corrupt(rng, name: str, params: CorruptionParams, generic: Sequence[str], prefix: str | None) -> str:
    draws = rng.random(4)
    if draws[0] < params.fold_diacritics:
        name = fold_diacritics(name)
    if draws[1] < params.reorder:
        tokens = name.split()
        name = " ".join(tokens[i] for i in rng.permutation(len(tokens)))
    if draws[2] < params.generic_append:
        name = f"{name} {generic[rng.integers(len(generic))]}"
    if prefix is not None and draws[3] < params.producer_prefix:
        name = f"{prefix} {name}"
    return name


def _epoch(year: int) -> int:
    return int(datetime(year, 1, 1, tzinfo=timezone.utc).timestamp())


def _rating_counts(rng: np.random.Generator, cfg: SimConfig, n: int) -> np.ndarray:
    if cfg.ratings_shape == 0:
        extra = np.zeros(n, dtype=int)
    else:
        extra = rng.geometric(1.0 / (cfg.ratings_shape + 1.0), size=n) - 1
    return np.minimum(cfg.ratings_min + extra, cfg.ratings_max)


def latent_scores(q: np.ndarray, noise: np.ndarray, h: float, anchor: str = "cumulative") -> np.ndarray:
    """Latent z matrix (products x rating index) from qualities and noise."""
    z = np.empty_like(noise)
    z[:, 0] = q + noise[:, 0]
    running = z[:, 0].copy()
    for i in range(1, noise.shape[1]):
        ref = running / i if anchor == "cumulative" else z[:, 0]
        z[:, i] = (1.0 - h) * (q + noise[:, i]) + h * ref
        running += z[:, i]
    return z


def _site_ratings(cfg: SimConfig, site: str, ids: list[str], q: np.ndarray, conv: SiteConvention):
    n = len(ids)
    counts = _rating_counts(_rng(cfg.seed, _S_STRUCTURE, site), cfg, n)
    width = int(counts.max()) if n else 0
    noise = _rng(cfg.seed, _S_LATENT, site).normal(0.0, cfg.sigma_e, size=(n, width))
    z = latent_scores(q, noise, cfg.h, cfg.anchor)

    t_start, t_end = _epoch(cfg.start_year), _epoch(cfg.start_year + cfg.n_years)
    span = t_end - t_start
    trng = _rng(cfg.seed, _S_TIME, site)
    first = t_start + trng.random(n) * 0.7 * span
    later = trng.random((n, width))
    later[:, 0] = 0.0
    # columns past a product's own count sort to the end and are never used
    later[np.arange(width)[None, :] >= counts[:, None]] = 2.0
    later = np.sort(later, axis=1)
    # leave room for the strict-increase adjustment below so no rating spills past the span
    times = first[:, None] + later * (t_end - 1 - width - first[:, None])
    times = np.floor(times).astype(np.int64)
    # strictly increasing within a product
    steps = np.arange(width)
    times = np.maximum.accumulate(times - steps, axis=1) + steps

    bounds = np.array([_epoch(cfg.start_year + k) for k in range(1, cfg.n_years)])
    year_idx = np.searchsorted(bounds, times, side="right")
    scale = np.sqrt(cfg.sigma_q**2 + cfg.sigma_e**2)
    raw = np.clip(conv.mean(year_idx) + conv.std(year_idx) * z / scale, 1.0, 5.0)
    users = _rng(cfg.seed, _S_USERS, site).integers(cfg.users_per_site, size=(n, width))

    ratings, latent = [], {}
    prefix = site.lower()
    for row, pid in enumerate(ids):
        c = int(counts[row])
        latent[(site, pid)] = z[row, :c].copy()
        for i in range(c):
            ratings.append(RatingRecord(site, pid, f"{prefix}u{users[row, i]:06d}", int(times[row, i]), float(raw[row, i])))
    return ratings, latent


def generate(config: SimConfig) -> Simulation:
    cfg = config
    rng = _rng(cfg.seed, _S_STRUCTURE)
    n = cfg.n_products
    n_shared = int(round(n * cfg.shared_fraction))
    n_a_only = (n - n_shared + 1) // 2
    presence = np.array(["AB"] * n_shared + ["A"] * n_a_only + ["B"] * (n - n_shared - n_a_only))
    presence = presence[rng.permutation(n)]

    n_producers = max(1, int(round(n / cfg.products_per_producer)))
    producer_of = rng.integers(n_producers, size=n)
    loc_idx = _weighted(rng, cfg.locations, [w for _, w in cfg.locations], n_producers)
    style_idx = _weighted(rng, cfg.styles, [s[2] for s in cfg.styles], n)
    abv = np.round(np.clip(rng.normal(6.5, 1.8, size=n), 3.0, 14.0), 1)
    quality = rng.normal(0.0, cfg.sigma_q, size=n)

    nrng = _rng(cfg.seed, _S_NAMES)
    producer_names = _producer_names(nrng, n_producers)
    product_names = []
    used_words: dict[int, set[str]] = {}
    for p in range(n):
        # producer words are excluded too: product names get them stripped before matching
        taken = used_words.setdefault(int(producer_of[p]), set(producer_names[producer_of[p]].split()))
        k = 1 + int(nrng.random() < 0.5)
        while True:
            words = [_WORDS[i] for i in nrng.choice(len(_WORDS), size=k, replace=False)]
            # distinct main words within a producer keep sibling products apart
            if not taken.intersection(words):
                break
        taken.update(words)
        product_names.append(" ".join(words + [cfg.styles[style_idx[p]][1]]))

    catalogs, ratings, truth_latent, ids = {}, {}, {}, {}
    producer_ids = {}
    for site, conv in (("A", cfg.site_a), ("B", cfg.site_b)):
        members = np.flatnonzero(np.char.find(presence, site) >= 0)
        # opaque site-local ids: numbering follows a random permutation
        perm = _rng(cfg.seed + 7919, _S_STRUCTURE, site).permutation(max(n, n_producers))
        ids[site] = {int(p): f"{site.lower()}-{perm[p]:06d}" for p in members}
        producer_ids[site] = {k: f"{site.lower()}-br{perm[k]:05d}" for k in range(n_producers)}
        missing = _rng(cfg.seed, _S_ABV, site).random(n) < cfg.abv_missing
        entries = []
        for p in members:
            pr = int(producer_of[p])
            entries.append(CatalogEntry(
                site_id=site,
                product_id=ids[site][int(p)],
                product_name=product_names[p],
                producer_id=producer_ids[site][pr],
                producer_name=producer_names[pr],
                producer_location=cfg.locations[loc_idx[pr]][0],
                style=cfg.styles[style_idx[p]][0],
                abv=None if missing[p] else float(abv[p]),
            ))
        entries.sort(key=lambda e: e.product_id)
        catalogs[site] = corrupt_names(entries, cfg.corruption, cfg.seed * 2 + _SITE_CODE[site])
        order = sorted(members, key=lambda p: ids[site][int(p)])
        site_ids = [ids[site][int(p)] for p in order]
        ratings[site], latent = _site_ratings(cfg, site, site_ids, quality[np.array(order, dtype=int)], conv)
        truth_latent.update(latent)

    shared = [p for p in range(n) if presence[p] == "AB"]
    alignment = sorted((ids["A"][p], ids["B"][p]) for p in shared)
    producers_both = sorted(
        (producer_ids["A"][k], producer_ids["B"][k])
        for k in set(int(producer_of[p]) for p in range(n) if "A" in presence[p])
        & set(int(producer_of[p]) for p in range(n) if "B" in presence[p])
    )
    q_map = {(site, ids[site][p]): float(quality[p]) for site in ("A", "B") for p in ids[site]}
    truth = GroundTruth(alignment, producers_both, q_map, truth_latent)
    return Simulation(catalogs["A"], catalogs["B"], ratings["A"], ratings["B"], truth)


SIM_FILES = {
    "catalog_a": "catalog_A.jsonl",
    "catalog_b": "catalog_B.jsonl",
    "ratings_a": "ratings_A.jsonl",
    "ratings_b": "ratings_B.jsonl",
    "truth": "truth.csv",
}


def write_simulation(out_dir: str | Path, sim: Simulation) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in SIM_FILES.items()}
    write_catalog(paths["catalog_a"], sim.catalog_a)
    write_catalog(paths["catalog_b"], sim.catalog_b)
    write_ratings(paths["ratings_a"], sim.ratings_a)
    write_ratings(paths["ratings_b"], sim.ratings_b)
    with open(paths["truth"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id_a", "id_b", "q_p"])
        for a, b in sim.truth.product_alignment:
            w.writerow([a, b, repr(sim.truth.quality[("A", a)])])
    return paths


def read_truth(path: str | Path) -> list[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [(row["id_a"], row["id_b"]) for row in csv.DictReader(fh)]
