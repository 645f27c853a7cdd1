import numpy as np
import pytest

from scattersim.cache import Cache
from scattersim.idf import CacheGeometry

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_cache(rng):
    return Cache(CacheGeometry(4, 6), rng=rng)


@pytest.fixture
def big_cache(rng):
    return Cache(CacheGeometry(8, 11), rng=rng)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
