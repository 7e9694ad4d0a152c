import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seqtest.model import Criterion, DesignProblem, Hypotheses, LambdaMatrix  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def table_hyp():
    return Hypotheses((0.3, 0.4, 0.5))


@pytest.fixture(scope="session")
def kw_hyp():
    return Hypotheses((0.3, 0.5, 0.7))


def random_problem(rng, k=None, horizon=None) -> DesignProblem:
    k = k or int(rng.integers(2, 5))
    horizon = horizon or int(rng.integers(2, 13))
    thetas = np.sort(rng.uniform(0.05, 0.95, size=k))
    while np.min(np.diff(thetas)) < 1e-3:
        thetas = np.sort(rng.uniform(0.05, 0.95, size=k))
    lam = np.exp(rng.uniform(-1.0, 6.0, size=(k, k)))
    K = int(rng.integers(1, 4))
    weights = rng.dirichlet(np.ones(K))
    weights[-1] = 1.0 - weights[:-1].sum()
    points = rng.uniform(0.05, 0.95, size=K)
    return DesignProblem(Hypotheses(tuple(thetas)), LambdaMatrix(lam), Criterion(tuple(points), tuple(weights)), horizon)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
