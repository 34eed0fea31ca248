import sys

import numpy as np
import pytest

from lpkernels.potential import ball_potential, gaussian_potential, yukawa_potential, zero_potential


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_ball():
    return ball_potential(1.0, 1.0)


@pytest.fixture
def yukawa_half():
    """Yukawa with Kato norm 2 pi."""
    return yukawa_potential(0.5, 1.0)


@pytest.fixture
def yukawa_unit():
    return yukawa_potential(1.0, 1.0)


@pytest.fixture
def gauss_small():
    return gaussian_potential(0.5, 1.0)


@pytest.fixture
def zero():
    return zero_potential()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
