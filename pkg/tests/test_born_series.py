import math

import numpy as np
import pytest

from lpkernels.born_series import (SeriesConfig, born_envelope, born_term, free_LP_kernel,
                                   projection_kernel, sum_small_potential)
from lpkernels.errors import RegimeError
from lpkernels.multiplier import make_bump, moment
from lpkernels.potential import FOUR_PI, gaussian_potential, kato_norm, yukawa_potential

FAST = SeriesConfig(max_n=3, mc_samples=4000, mc_budget=8000)


def test_free_kernel_diagonal():
    p = make_bump()
    x = np.array([0.1, 0.2, 0.3])
    for N in (0.5, 2.0):
        assert free_LP_kernel(N, x, x) == pytest.approx(
            N ** 3 * moment(p, 2) / (2 * math.pi ** 2), rel=1e-9)


@pytest.mark.parametrize("N", [0.25, 3.0])
def test_free_kernel_scaling(N):
    x, y = np.array([0.1, 0.0, 0.4]), np.array([-0.3, 0.5, 0.2])
    assert free_LP_kernel(N, x, y) == pytest.approx(N ** 3 * free_LP_kernel(1.0, N * x, N * y),
                                                    rel=1e-9)


def test_free_kernel_decay_is_bounded():
    p = make_bump()
    t = np.linspace(0, 100, 401)
    vals = np.array([abs(free_LP_kernel(1.0, np.zeros(3), np.array([s, 0, 0]), p)) for s in t])
    weighted = vals * (1 + t * t) ** 2
    # m = 3: the weighted kernel stays bounded, so the far half cannot outgrow the middle
    assert np.max(weighted[t >= 50]) <= 2 * np.max(weighted[(t >= 10) & (t < 50)])


def test_zero_potential_terms_vanish(zero):
    x, y = np.zeros(3), np.array([0.5, 0, 0])
    for n in (1, 2, 3):
        assert born_term(n, 1.0, x, y, zero, FAST).value == 0.0
    assert sum_small_potential(1.0, x, y, zero, FAST).value == free_LP_kernel(1.0, x, y)


def test_first_term_is_linear_in_amplitude():
    x, y = np.array([0.2, 0, 0]), np.array([0, 0.5, 0])
    a = born_term(1, 1.0, x, y, yukawa_potential(0.5)).value
    b = born_term(1, 1.0, x, y, yukawa_potential(1.5)).value
    assert b == pytest.approx(3 * a, rel=1e-6)


def test_second_term_scales_quadratically():
    x, y = np.array([0.2, 0, 0]), np.array([0, 0.5, 0])
    cfg = SeriesConfig(mc_samples=20000, mc_budget=20000, seed=3)
    a = born_term(2, 0.5, x, y, gaussian_potential(0.3), cfg)
    b = born_term(2, 0.5, x, y, gaussian_potential(0.6), cfg)
    # same seed and chain law (the sampler depends on |V| only up to scale)
    assert b.value == pytest.approx(4 * a.value, rel=1e-9)


def test_terms_obey_rigorous_envelope(yukawa_half):
    x, y = np.zeros(3), np.array([0.5, 0, 0])
    q = kato_norm(yukawa_half).value / FOUR_PI
    for n in range(4):
        t = born_term(n, 0.5, x, y, yukawa_half, FAST)
        assert abs(t.value) <= born_envelope(n, q, 0.5, 0.5) * (1 + 1e-12) + 3 * t.mc_stderr


def test_sum_is_symmetric(yukawa_half, rng):
    cfg = SeriesConfig(max_n=3, mc_samples=20000, mc_budget=40000)
    for _ in range(3):
        x, y = rng.uniform(-0.7, 0.7, 3), rng.uniform(-0.7, 0.7, 3)
        a = sum_small_potential(0.5, x, y, yukawa_half, cfg)
        b = sum_small_potential(0.5, y, x, yukawa_half, cfg)
        assert abs(a.value - b.value) <= 4 * math.hypot(a.mc_stderr, b.mc_stderr) + 1e-6 * abs(
            a.value)


def test_evaluation_is_deterministic(yukawa_half):
    x, y = np.zeros(3), np.array([0.5, 0, 0])
    a = born_term(2, 1.0, x, y, yukawa_half, FAST).value
    b = born_term(2, 1.0, x, y, yukawa_half, FAST).value
    assert a == b


def test_large_potential_needs_thresholds():
    V = gaussian_potential(3.0)
    with pytest.raises(RegimeError, match="4 pi"):
        sum_small_potential(1.0, np.zeros(3), np.ones(3), V, FAST)
    with pytest.raises(RegimeError):
        projection_kernel(1.0, np.zeros(3), np.ones(3), V, FAST)


def test_projection_kernel_records_regime(yukawa_half):
    ev = projection_kernel(1.0, np.zeros(3), np.array([0.3, 0, 0]), yukawa_half, FAST)
    assert ev.regime == "small-potential"
    assert abs(ev.imag_residue) <= 1e-9 * abs(ev.value)
