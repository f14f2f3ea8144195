"""End-to-end orchestration and the report bundle.

Each stage reads and writes the same bundle files whether it runs inside
``run_pipeline`` or as a standalone CLI subcommand, so the pipeline equals the
composition of the subcommands.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .effects import (
    EffectsConfig,
    EffectsResult,
    estimate_all,
    write_disaggregated_csv,
    write_effects_csv,
    write_ranks_csv,
)
from .ingest import CatalogEntry, IngestError, RatingRecord, catalog_index, load_catalog, load_ratings, summarize
from .match import MatchConfig, MatchPair, match_catalogs, read_pairs_csv, write_pairs_csv
from .natexp import (
    ASYMMETRIC_GROUPS,
    ExperimentConfig,
    aggregate_groups,
    assign_groups,
    attach_sequences,
    balance_groups,
    build_population,
    disaggregate,
    label_population,
    label_warnings,
    matched_summary,
    ratings_by_product,
    read_groups_csv,
    read_membership_csv,
    write_group_matrix_csv,
    write_groups_csv,
    write_membership_csv,
)
from .simgen import SIM_FILES, SimConfig, generate, write_simulation
from .standardize import DegenerateCellError, YearlyStats, fit_yearly_stats, read_stats_csv, standardize, write_stats_csv
from .validity import external_validity, internal_validity, write_report

log = logging.getLogger(__name__)

ARTIFACTS = (
    ("match_pairs", "match_pairs.csv"),
    ("standardization_stats", "standardization_stats.csv"),
    ("group_matrix", "group_matrix.csv"),
    ("membership", "membership.csv"),
    ("effects", "effects.csv"),
    ("disaggregated", "disaggregated.csv"),
    ("rank_effects", "rank_effects.csv"),
    ("external_validity", "external_validity.json"),
    ("internal_validity", "internal_validity.json"),
)
FILES = dict(ARTIFACTS)
GROUPS_FILE = "groups.csv"  # pre-balancing membership, written by the `label` step only
MANIFEST = "manifest.json"
ERROR_FILE = "error.json"

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2


@dataclass
class InputPaths:
    catalog_a: str
    catalog_b: str
    ratings_a: str
    ratings_b: str

    @classmethod
    def from_dir(cls, d: str | Path) -> "InputPaths":
        d = Path(d)
        return cls(*(str(d / SIM_FILES[k]) for k in ("catalog_a", "catalog_b", "ratings_a", "ratings_b")))


@dataclass
class PipelineConfig:
    inputs: InputPaths | None = None
    simulate: SimConfig | None = None
    match: MatchConfig = field(default_factory=MatchConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    effects: EffectsConfig = field(default_factory=EffectsConfig)
    top_k: int | None = 10
    min_cell_size: int = 2

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if d.get("inputs") is not None:
            d["inputs"] = InputPaths(**d["inputs"])
        if d.get("simulate") is not None:
            d["simulate"] = SimConfig.from_dict(d["simulate"])
        if "match" in d:
            d["match"] = MatchConfig(**d["match"])
        if "experiment" in d:
            d["experiment"] = ExperimentConfig(**d["experiment"])
        if "effects" in d:
            eff = dict(d["effects"])
            if "indices" in eff:
                eff["indices"] = tuple(eff["indices"])
            d["effects"] = EffectsConfig(**eff)
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise IngestError("config file not found", path=str(path))
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def seeds(self) -> dict[str, int | None]:
        return {
            "simulate": self.simulate.seed if self.simulate else None,
            "balance": self.experiment.balance_seed,
            "bootstrap": self.effects.seed,
        }

    def with_overrides(self, *, theta=None, delta=None, percentile=None, min_ratings=None, seed=None) -> "PipelineConfig":
        r = dataclasses.replace
        cfg = r(self)
        if theta is not None or delta is not None:
            cfg.match = r(cfg.match, **{k: v for k, v in (("theta", theta), ("delta", delta)) if v is not None})
        if percentile is not None:
            cfg.experiment = r(cfg.experiment, p=percentile)
        if min_ratings is not None:
            cfg.experiment = r(cfg.experiment, min_ratings=min_ratings)
        if seed is not None:
            cfg.experiment = r(cfg.experiment, balance_seed=seed)
            cfg.effects = r(cfg.effects, seed=seed)
            if cfg.simulate is not None:
                cfg.simulate = r(cfg.simulate, seed=seed)
        return cfg


# --- loading ------------------------------------------------------------------

@dataclass
class Dataset:
    catalog_a: list[CatalogEntry]
    catalog_b: list[CatalogEntry]
    ratings: list[RatingRecord]

    @property
    def catalogs(self) -> list[CatalogEntry]:
        return self.catalog_a + self.catalog_b


def _site_only(entries: Sequence, site: str, path: str) -> list:
    wrong = [e for e in entries if e.site_id != site]
    if wrong:
        raise IngestError(f"expected only site {site} records, found site {wrong[0].site_id}", path=path)
    return list(entries)


def load_dataset(paths: InputPaths) -> Dataset:
    cat_a = _site_only(load_catalog(paths.catalog_a), "A", paths.catalog_a)
    cat_b = _site_only(load_catalog(paths.catalog_b), "B", paths.catalog_b)
    index = catalog_index(cat_a + cat_b)
    ratings = _site_only(load_ratings(paths.ratings_a, index), "A", paths.ratings_a)
    ratings += _site_only(load_ratings(paths.ratings_b, index), "B", paths.ratings_b)
    return Dataset(cat_a, cat_b, ratings)


# --- stages -------------------------------------------------------------------

def stage_match(data: Dataset, cfg: MatchConfig, out: Path) -> tuple[list[MatchPair], list[MatchPair]]:
    producers, products = match_catalogs(data.catalog_a, data.catalog_b, cfg)
    write_pairs_csv(out / FILES["match_pairs"], producers, products)
    log.info("matched %d producers, %d products", len(producers), len(products))
    return producers, products


def stage_standardize(data: Dataset, min_cell_size: int, out: Path) -> YearlyStats:
    stats = fit_yearly_stats(data.ratings, min_cell_size)
    write_stats_csv(out / FILES["standardization_stats"], stats)
    return stats


def standardized_by_product(data: Dataset, stats: YearlyStats):
    return ratings_by_product(standardize(data.ratings, stats))


def stage_label(product_pairs, by_product, cfg: ExperimentConfig, out: Path, write_groups: bool = False):
    population = build_population(product_pairs, by_product, cfg.min_ratings)
    if population:
        labels_a, labels_b = label_population(population, by_product, cfg)
    else:
        labels_a, labels_b = {}, {}
    for w in label_warnings(population, by_product, cfg):
        log.warning("degenerate: %s: %s", w["analysis"], w["reason"])
    groups = assign_groups(labels_a, labels_b, population)
    write_group_matrix_csv(out / FILES["group_matrix"], groups)
    if write_groups:
        write_groups_csv(out / GROUPS_FILE, groups)
    return groups


def stage_balance(groups, seed: int, out: Path):
    balanced = balance_groups(groups, seed)
    aggregated = aggregate_groups(balanced)
    write_membership_csv(out / FILES["membership"], aggregated)
    return balanced, aggregated


def stage_effects(aggregated, balanced, cfg: EffectsConfig, min_ratings: int, out: Path, threads: int = 1) -> EffectsResult:
    result = estimate_all(aggregated, balanced, cfg, min_ratings=min_ratings, threads=threads)
    write_effects_csv(out / FILES["effects"], result.per_index + result.long_term)
    write_disaggregated_csv(out / FILES["disaggregated"], result.disaggregated)
    write_ranks_csv(out / FILES["rank_effects"], result.ranks)
    return result


def stage_validity(data: Dataset, product_pairs, aggregated, top_k, out: Path):
    ext = external_validity(data.catalogs, data.ratings, product_pairs, top_k=top_k)
    internal = internal_validity(aggregated, data.catalogs, top_k=top_k)
    write_report(out / FILES["external_validity"], ext)
    write_report(out / FILES["internal_validity"], internal)
    return ext, internal


def primary_degenerate(degenerate: Sequence[dict]) -> list[dict]:
    """Degenerate entries that concern the per-index analysis of an asymmetric group."""
    return [d for d in degenerate if d["group"] in ASYMMETRIC_GROUPS and d["analysis"] == "per_index"]


# --- composed stages from files (used by CLI subcommands) ----------------------

def load_pairs(out: Path):
    path = out / FILES["match_pairs"]
    if not path.exists():
        raise IngestError("match pairs not found; run `match` first", path=str(path))
    return read_pairs_csv(path)


def load_stats(out: Path) -> YearlyStats:
    path = out / FILES["standardization_stats"]
    if not path.exists():
        raise IngestError("standardization stats not found; run `standardize` first", path=str(path))
    return read_stats_csv(path)


def load_groups(out: Path):
    path = out / GROUPS_FILE
    if not path.exists():
        raise IngestError("groups not found; run `label` first", path=str(path))
    return read_groups_csv(path)


def load_membership(out: Path, by_product=None):
    path = out / FILES["membership"]
    if not path.exists():
        raise IngestError("membership not found; run `balance` first", path=str(path))
    aggregated = read_membership_csv(path)
    if by_product is not None:
        aggregated = {g: attach_sequences(m, by_product) for g, m in aggregated.items()}
    return aggregated, disaggregate(aggregated)


# --- full run -----------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def error_record(exc: BaseException, code: int) -> dict:
    rec = {"status": code, "error": type(exc).__name__, "message": str(exc)}
    path = getattr(exc, "path", None)
    if path:
        rec["path"] = path
    return rec


def resolve_inputs(config: PipelineConfig, out: Path) -> InputPaths:
    if config.simulate is not None:
        inputs_dir = out / "inputs"
        write_simulation(inputs_dir, generate(config.simulate))
        return InputPaths.from_dir(inputs_dir)
    if config.inputs is None:
        raise IngestError("config needs either `inputs` or `simulate`")
    for p in dataclasses.astuple(config.inputs):
        if not Path(p).exists():
            raise IngestError("input file not found", path=p)
    return config.inputs


def run_pipeline(config: PipelineConfig, out_dir: str | Path, threads: int = 1) -> int:
    """Run every stage, write the bundle and manifest; returns the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / ERROR_FILE).unlink(missing_ok=True)
    try:
        inputs = resolve_inputs(config, out)
        data = load_dataset(inputs)
        _, product_pairs = stage_match(data, config.match, out)
        stats = stage_standardize(data, config.min_cell_size, out)
        by_product = standardized_by_product(data, stats)
        groups = stage_label(product_pairs, by_product, config.experiment, out)
        balanced, aggregated = stage_balance(groups, config.experiment.balance_seed, out)
        result = stage_effects(aggregated, balanced, config.effects, config.experiment.min_ratings, out, threads)
        stage_validity(data, product_pairs, aggregated, config.top_k, out)
    except (IngestError, FileNotFoundError) as exc:
        write_json(out / ERROR_FILE, error_record(exc, EXIT_INPUT))
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except (DegenerateCellError, ValueError) as exc:
        write_json(out / ERROR_FILE, error_record(exc, EXIT_DEGENERATE))
        log.error("analysis failed: %s", exc)
        return EXIT_DEGENERATE

    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seeds": config.seeds(),
        "artifacts": [
            {"name": name, "file": fname, "sha256": sha256_file(out / fname)} for name, fname in ARTIFACTS
        ],
        "summary": {
            "dataset": summarize(data.catalogs, data.ratings).as_dict(),
            "matched": {str(k): v for k, v in matched_summary(product_pairs, data.catalogs, data.ratings).items()},
            "aggregated_group_sizes": {g: len(m) for g, m in aggregated.items()},
        },
        "degenerate": label_warnings(
            build_population(product_pairs, by_product, config.experiment.min_ratings), by_product, config.experiment
        ) + result.degenerate,
    }
    write_json(out / MANIFEST, manifest)
    if primary_degenerate(result.degenerate):
        return EXIT_DEGENERATE
    return EXIT_OK
