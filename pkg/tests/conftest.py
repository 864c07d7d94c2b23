from pathlib import Path

import numpy as np
import pytest

from spatial_fh.data_model import SurveyDataset
from spatial_fh.spatial_graph import build_graph, eastern_us_graph, shipped_data_path

FIXTURE_DIR = shipped_data_path("eastern_us")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def eastern():
    return eastern_us_graph()


@pytest.fixture
def path3():
    return build_graph(3, [(0, 1), (1, 2)])


@pytest.fixture(scope="session")
def ring5():
    return build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURE_DIR


def toy_dataset(n, rng, sigma2=1e-3):
    return SurveyDataset(tuple(f"a{i}" for i in range(n)), rng.normal(0.1, 0.05, n),
                         np.full(n, sigma2))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
