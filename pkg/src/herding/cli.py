"""Command-line entry point: ``herding <subcommand> ...``.

Subcommands share one output directory and the bundle file names, so running
simulate, match, standardize, label, balance, effects and validity in order
reproduces ``pipeline`` file for file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .ingest import IngestError
from .pipeline import (
    ERROR_FILE,
    EXIT_DEGENERATE,
    EXIT_INPUT,
    EXIT_OK,
    InputPaths,
    PipelineConfig,
    error_record,
    load_dataset,
    load_groups,
    load_membership,
    load_pairs,
    load_stats,
    primary_degenerate,
    run_pipeline,
    stage_balance,
    stage_effects,
    stage_label,
    stage_match,
    stage_standardize,
    stage_validity,
    standardized_by_product,
    write_json,
)
from .simgen import SimConfig, generate, write_simulation
from .standardize import DegenerateCellError
from .validity import write_internal_table, write_location_table

log = logging.getLogger("herding")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker bound; never changes output")
    p.add_argument("-v", "--verbose", action="store_true")


def _inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--inputs", help="directory holding catalog_A/B.jsonl and ratings_A/B.jsonl")
    p.add_argument("--catalog-a")
    p.add_argument("--catalog-b")
    p.add_argument("--ratings-a")
    p.add_argument("--ratings-b")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herding", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic two-site dataset")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-products", type=int)
    p.add_argument("--h", type=float, help="herding coefficient in [0, 1]")

    p = sub.add_parser("match", help="align producers and products across sites")
    _common(p)
    _inputs(p)
    p.add_argument("--theta", type=float)
    p.add_argument("--delta", type=float)

    p = sub.add_parser("standardize", help="fit per-site, per-year score statistics")
    _common(p)
    _inputs(p)

    p = sub.add_parser("label", help="label first ratings and form paired-treatment groups")
    _common(p)
    _inputs(p)
    p.add_argument("--percentile", type=float)
    p.add_argument("--min-ratings", type=int)

    p = sub.add_parser("balance", help="balance and aggregate the groups")
    _common(p)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("effects", help="estimate herding effects")
    _common(p)
    _inputs(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-ratings", type=int)

    p = sub.add_parser("validity", help="external and internal validity reports")
    _common(p)
    _inputs(p)
    p.add_argument("--tables", action="store_true", help="also write tabular exports")

    p = sub.add_parser("pipeline", help="run every stage and write the full bundle")
    _common(p)
    _inputs(p)
    p.add_argument("--simulate", action="store_true", help="use simulator input (default config if none given)")
    p.add_argument("--theta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--percentile", type=float)
    p.add_argument("--min-ratings", type=int)
    p.add_argument("--seed", type=int)
    return parser


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if getattr(args, "inputs", None):
        cfg.inputs = InputPaths.from_dir(args.inputs)
    explicit = {k: getattr(args, k, None) for k in ("catalog_a", "catalog_b", "ratings_a", "ratings_b")}
    if any(explicit.values()):
        base = dataclasses.asdict(cfg.inputs) if cfg.inputs else {}
        base.update({k: v for k, v in explicit.items() if v})
        missing = [k for k in ("catalog_a", "catalog_b", "ratings_a", "ratings_b") if k not in base]
        if missing:
            raise IngestError(f"missing input paths: {', '.join('--' + m.replace('_', '-') for m in missing)}")
        cfg.inputs = InputPaths(**base)
    if getattr(args, "simulate", False) and cfg.simulate is None:
        cfg.simulate = SimConfig()
    return cfg.with_overrides(
        theta=getattr(args, "theta", None),
        delta=getattr(args, "delta", None),
        percentile=getattr(args, "percentile", None),
        min_ratings=getattr(args, "min_ratings", None),
        seed=getattr(args, "seed", None),
    )


def _dataset(cfg: PipelineConfig):
    if cfg.inputs is None:
        raise IngestError("no input files: pass --inputs DIR or the four --catalog/--ratings paths")
    return load_dataset(cfg.inputs)


def _run(args) -> int:
    out = Path(args.out)
    cfg = _config(args)
    if args.command == "pipeline":
        if cfg.simulate is not None:
            cfg.inputs = None
        return run_pipeline(cfg, out, threads=args.threads)

    out.mkdir(parents=True, exist_ok=True)
    if args.command == "simulate":
        sim_cfg = cfg.simulate or SimConfig()
        overrides = {k: v for k, v in (("seed", args.seed), ("n_products", args.n_products), ("h", args.h)) if v is not None}
        sim_cfg = dataclasses.replace(sim_cfg, **overrides)
        write_simulation(out, generate(sim_cfg))
        return EXIT_OK

    if args.command == "balance":
        stage_balance(load_groups(out), cfg.experiment.balance_seed, out)
        return EXIT_OK

    data = _dataset(cfg)
    if args.command == "match":
        stage_match(data, cfg.match, out)
    elif args.command == "standardize":
        stage_standardize(data, cfg.min_cell_size, out)
    elif args.command == "label":
        _, products = load_pairs(out)
        by_product = standardized_by_product(data, load_stats(out))
        stage_label(products, by_product, cfg.experiment, out, write_groups=True)
    elif args.command == "effects":
        by_product = standardized_by_product(data, load_stats(out))
        aggregated, balanced = load_membership(out, by_product)
        result = stage_effects(aggregated, balanced, cfg.effects, cfg.experiment.min_ratings, out, args.threads)
        for d in result.degenerate:
            log.warning("degenerate: %s %s: %s", d["group"], d["analysis"], d["reason"])
        if primary_degenerate(result.degenerate):
            return EXIT_DEGENERATE
    elif args.command == "validity":
        _, products = load_pairs(out)
        aggregated, _ = load_membership(out)
        ext, internal = stage_validity(data, products, aggregated, cfg.top_k, out)
        if args.tables:
            write_location_table(out / "table_locations.csv", ext)
            write_internal_table(out / "table_internal_validity.csv", internal)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except (IngestError, FileNotFoundError) as exc:
        rec = error_record(exc, EXIT_INPUT)
    except (DegenerateCellError, ValueError) as exc:
        rec = error_record(exc, EXIT_DEGENERATE)
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / ERROR_FILE, rec)
    except OSError:
        pass  # the record already went to stderr
    return rec["status"]


if __name__ == "__main__":
    sys.exit(main())
