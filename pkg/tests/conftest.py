import numpy as np
import pytest

from adasafe.problems import generate_instance, default_instance

ACCEPTANCE_RESULTS = []


def record_criterion(name, passed, detail=""):
    ACCEPTANCE_RESULTS.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def instances():
    """The four desk-scale families, built once."""
    out = {}
    for family in ("lasso", "logreg", "cubic", "p-norm"):
        out[family] = generate_instance(default_instance(family, seed=0))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
