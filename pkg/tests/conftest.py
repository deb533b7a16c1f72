import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from phcharts.charts import build_unstable_chart  # noqa: E402
from phcharts.compat import build_stable_chart, raise_level  # noqa: E402
from phcharts.models import make_model  # noqa: E402

GRID = np.linspace(-0.5, 0.5, 41)


@pytest.fixture(scope="session")
def grid():
    return GRID.copy()


@pytest.fixture(scope="session")
def models():
    return {n: make_model(n) for n in "ABC"}


@pytest.fixture(scope="session")
def charts0(models):
    """0-good unstable charts, order 10."""
    return {n: build_unstable_chart(m, 10) for n, m in models.items()}


@pytest.fixture(scope="session")
def chart_b1(charts0):
    return raise_level(charts0["B"], 1)


@pytest.fixture(scope="session")
def stable_b1(models):
    return build_stable_chart(models["B"], 1, 10)


@pytest.fixture(scope="session")
def stable_c0(models):
    return build_stable_chart(models["C"], 0, 10)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[0].split()[-1])):
            terminalreporter.write_line(line)
