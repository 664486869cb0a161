from pathlib import Path

import numpy as np
import pytest

from qdcs.formats import read_pgm
from qdcs.keyrng import SecretKey

DATA = Path(__file__).parent / "data"

_ACCEPTANCE_LINES = []


@pytest.fixture
def key():
    return SecretKey(bytes(range(16)))


@pytest.fixture(scope="session")
def camera():
    return read_pgm(DATA / "camera256.pgm")


@pytest.fixture(scope="session")
def astronaut():
    return read_pgm(DATA / "astronaut256.pgm")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def acceptance_log():
    """Record one human-readable verdict line per acceptance criterion."""

    def record(name, passed, detail=""):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
