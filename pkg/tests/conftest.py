import numpy as np
import pytest

from stochgalerkin.models import NS2DModel, NS2DSpec, PE3DSpec, PEModel, SyntheticModel, SyntheticSpec


@pytest.fixture(scope="session")
def synthetic():
    return SyntheticModel(SyntheticSpec(dim=64))


@pytest.fixture(scope="session")
def ns2d():
    return NS2DModel(NS2DSpec(modes_per_axis=32))


@pytest.fixture(scope="session")
def pe():
    return PEModel(PE3DSpec(modes=(8, 8, 8)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(number, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {name}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
