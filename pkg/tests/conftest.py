from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
import pytest

import support

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracles.json").read_text())


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def small_fixture():
    """n = 3000 synthetic dataset with its split and design (60% zeros)."""
    return support.prepare(7, n=3000)


@pytest.fixture(scope="session")
def mc_runs():
    """The 20 seeded full-size replications shared by the acceptance checks."""
    runs = []
    for r in range(support.N_REPLICATIONS):
        seed = r + 1
        runs.append(support.run_replication(
            seed,
            bootstrap_reps=1000 if r < support.N_BOOTSTRAP_SEEDS else None,
            me_reps=200 if r == 0 else 50,
            oracle=(r == 0),
        ))
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if support.RESULT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in support.RESULT_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_convergence():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*did not fully converge.*")
        yield
