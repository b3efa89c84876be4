import numpy as np
import pytest

from randprod import finite_support, rank_one_rows


@pytest.fixture
def two_point():
    """d=1 law on {0, 2} with equal weights: mean 1, radius 2."""
    return finite_support([[[0.0]], [[2.0]]], [0.5, 0.5])


@pytest.fixture
def rows4():
    rng = np.random.default_rng(2024)
    return rank_one_rows(rng.standard_normal((8, 4)))


def random_psd(rng, d, rank=None):
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank))
    return g @ g.T


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
