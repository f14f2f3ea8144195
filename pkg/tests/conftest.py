from pathlib import Path

import pytest

from herding.ingest import RatingRecord
from herding.simgen import CorruptionParams, SimConfig, generate
from herding.standardize import StandardizedRating

DATA = Path(__file__).parent / "data"


def sr(site: str, pid: str, z: float, t: int = 1, user: str = "u") -> StandardizedRating:
    """A standardized rating with a dummy raw score."""
    return StandardizedRating(RatingRecord(site, pid, user, t, 3.0), z)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def small_sim():
    return generate(SimConfig(n_products=300, ratings_min=5, ratings_shape=10.0, seed=3))


@pytest.fixture(scope="session")
def clean_sim():
    cfg = SimConfig(n_products=600, shared_fraction=1.0, ratings_min=5, ratings_shape=10.0,
                    corruption=CorruptionParams.none(), seed=11)
    return generate(cfg)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
