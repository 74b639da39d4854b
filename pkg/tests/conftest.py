import numpy as np
import pytest

from uniatt.simulation import random_rotation

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def rotation(rng):
    return random_rotation(3, rng)


@pytest.fixture
def report():
    """Record an acceptance outcome: ``report(key, title, ok, detail)``."""

    def record(key, title, ok, detail):
        _ACCEPTANCE[key] = (title, bool(ok), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}. {title}: {detail}")
