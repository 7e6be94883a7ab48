import numpy as np
import pytest

from schoenbat import AttentionInput, RngStream

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_ball(rng, n, d, radius=1.0):
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return radius * x * rng.uniform(size=(n, 1)) ** (1.0 / d)


@pytest.fixture
def small_input(rng):
    n, d = 6, 4
    return AttentionInput(unit_ball(rng, n, d), unit_ball(rng, n, d), rng.standard_normal((n, d)))


@pytest.fixture
def stream():
    return RngStream(2024)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, line = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {line}")
