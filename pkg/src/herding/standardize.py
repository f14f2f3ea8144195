"""Per-site, per-year z-scores.

Stats are fitted on every rating of a site-year, not just matched products,
and use the population convention (divisor n).
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import RatingRecord

Cell = tuple[str, int]


class DegenerateCellError(ValueError):
    def __init__(self, cell: Cell, reason: str):
        super().__init__(f"degenerate cell site={cell[0]} year={cell[1]}: {reason}")
        self.cell = cell


class MissingCellError(KeyError):
    pass


@dataclass(frozen=True)
class CellStats:
    mean: float
    std: float
    count: int


@dataclass
class YearlyStats:
    cells: dict[Cell, CellStats]

    def __getitem__(self, cell: Cell) -> CellStats:
        return self.cells[cell]

    def __contains__(self, cell: Cell) -> bool:
        return cell in self.cells


@dataclass(frozen=True, slots=True)
class StandardizedRating:
    record: RatingRecord
    z: float

    @property
    def order_key(self) -> tuple:
        return self.record.order_key


def year_of(timestamp: int) -> int:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).year


def _cell_stats(scores: Sequence[float]) -> tuple[float, float]:
    n = len(scores)
    mean = math.fsum(scores) / n
    var = math.fsum((s - mean) ** 2 for s in scores) / n
    return mean, math.sqrt(var)


def fit_yearly_stats(ratings: Iterable[RatingRecord], min_cell_size: int = 2) -> YearlyStats:
    if min_cell_size < 2:
        raise ValueError("min_cell_size must be at least 2")
    by_cell: dict[Cell, list[float]] = defaultdict(list)
    for r in ratings:
        by_cell[(r.site_id, year_of(r.timestamp))].append(r.score)
    cells = {}
    for cell in sorted(by_cell):
        # fsum is exact, so the result does not depend on accumulation order
        scores = by_cell[cell]
        if len(scores) < min_cell_size:
            raise DegenerateCellError(cell, f"{len(scores)} ratings < minimum {min_cell_size}")
        mean, std = _cell_stats(scores)
        if std == 0.0:
            raise DegenerateCellError(cell, "zero variance")
        cells[cell] = CellStats(mean, std, len(scores))
    return YearlyStats(cells)


def standardize(ratings: Iterable[RatingRecord], stats: YearlyStats) -> list[StandardizedRating]:
    out = []
    for r in ratings:
        cell = (r.site_id, year_of(r.timestamp))
        try:
            c = stats.cells[cell]
        except KeyError:
            raise MissingCellError(f"no stats for site={cell[0]} year={cell[1]}") from None
        out.append(StandardizedRating(r, (r.score - c.mean) / c.std))
    return out


def write_stats_csv(path: str | Path, stats: YearlyStats) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "year", "mean", "std", "count"])
        for (site, year), c in sorted(stats.cells.items()):
            w.writerow([site, year, repr(c.mean), repr(c.std), c.count])


def read_stats_csv(path: str | Path) -> YearlyStats:
    cells = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cells[(row["site"], int(row["year"]))] = CellStats(
                float(row["mean"]), float(row["std"]), int(row["count"])
            )
    return YearlyStats(cells)
