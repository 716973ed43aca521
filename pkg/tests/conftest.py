import numpy as np
import pytest


def random_simplex(rng, size, dims):
    """Dirichlet(1) rows, some with exact zeros to exercise sparse support."""
    p = rng.dirichlet(np.ones(dims), size=size)
    mask = rng.random(p.shape) < 0.2
    p = np.where(mask, 0.0, p)
    empty = p.sum(axis=-1) == 0
    p[empty, 0] = 1.0
    return p / p.sum(axis=-1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
