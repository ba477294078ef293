import json
from pathlib import Path

import numpy as np
import pytest

from countyspatial.fixtures import grid_coords, lattice_dataset
from countyspatial.weights import contiguity_weights, row_standardize

TESTS = Path(__file__).parent
ROOT = TESTS.parent
FIXTURE_DIR = ROOT / "fixtures" / "lattice"


@pytest.fixture(scope="session")
def frozen():
    return json.loads((TESTS / "oracles" / "frozen.json").read_text())


def rook_w(nx: int, ny: int | None = None):
    return row_standardize(contiguity_weights(lattice_dataset(nx, ny), "rook"))


def global_sample():
    """Same draw as the frozen global oracle: 10x10 rook lattice, lag DGP with rho 0.4."""
    w = rook_w(10)
    rng = np.random.default_rng(123)
    X = rng.normal(size=(100, 2))
    e = 1.0 + X @ np.array([2.0, -1.0]) + rng.normal(size=100)
    y = np.linalg.solve(np.eye(100) - 0.4 * w.dense(), e)
    return w, X, y


def local_sample(nx: int = 12, seed: int = 5):
    """Same draw as the frozen local oracle: one covariate with a planar slope surface."""
    rng = np.random.default_rng(seed)
    coords = grid_coords(nx)
    x = rng.normal(size=nx * nx)
    b1 = 1.0 + (coords[:, 0] + coords[:, 1]) / (2 * (nx - 1))
    y = 2.0 + b1 * x + rng.normal(0, 0.5, nx * nx)
    return coords, x[:, None], y


@pytest.fixture(scope="session")
def rook10():
    return rook_w(10)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line, print it, then fail the test if the criterion failed."""
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
