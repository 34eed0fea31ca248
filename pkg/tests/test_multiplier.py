import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpkernels.multiplier import (chi, dyadic_partition_sum, make_bump, make_translated_partition,
                                  moment, phi_check_transform, small_sigma_constant,
                                  sobolev_W_m1_norm, tail_max)


def test_bump_support_and_centre():
    assert chi(1.0) == pytest.approx(1.0)
    assert chi(0.4) == 0.0
    assert chi(2.5) == 0.0
    assert np.all(chi(np.linspace(0.5, 2.0, 101)) >= 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.55, 3.5))
def test_dyadic_partition_of_unity(lam):
    assert dyadic_partition_sum(lam, 0.25, 8.0) == pytest.approx(1.0, abs=1e-12)


def test_partition_at_nine_tenths():
    assert dyadic_partition_sum(0.9, 0.25, 4.0) == pytest.approx(1.0, abs=1e-12)


def test_sobolev_norm_properties():
    p = make_bump()
    n0 = sobolev_W_m1_norm(p, 0)
    assert 0 < n0 <= 1.5
    norms = [sobolev_W_m1_norm(p, m) for m in range(5)]
    assert all(b >= a for a, b in zip(norms, norms[1:]))
    assert sobolev_W_m1_norm(p.with_amplitude(2.0), 3) == pytest.approx(2 * norms[3], rel=1e-10)


def test_transform_vanishes_at_zero():
    assert phi_check_transform(make_bump(), 0.0) == 0.0


@pytest.mark.parametrize("N", [0.5, 1.0, 4.0])
def test_transform_small_sigma_bound(N):
    p = make_bump(N)
    # |F_N| <= N^2 sigma int |u phi| = N^2 sigma * 2 int u^2 chi
    c = small_sigma_constant(p)
    assert c == pytest.approx(2 * moment(p, 2), rel=1e-10)
    sig = np.linspace(1e-4, 0.1, 40) / N
    F = np.abs(phi_check_transform(p, sig))
    assert np.all(F <= c * N ** 2 * sig * (1 + 1e-6))


def test_transform_scaling():
    p1, p4 = make_bump(1.0), make_bump(4.0)
    s = np.array([0.01, 0.3, 2.0])
    assert np.allclose(phi_check_transform(p4, s), 4 * phi_check_transform(p1, 4 * s),
                       rtol=1e-10, atol=1e-14)


def test_transform_fast_table_agrees_with_quadrature():
    p = make_bump()
    s = np.geomspace(1e-3, 200, 50)
    assert np.allclose(phi_check_transform(p, s, fast=True), phi_check_transform(p, s),
                       rtol=1e-6, atol=1e-9)


def test_transform_far_decay_slope():
    p = make_bump()
    t = np.geomspace(10, 100, 40)
    env = tail_max(np.abs(phi_check_transform(p, t)))
    slope = np.polyfit(np.log(t), np.log(env), 1)[0]
    assert slope <= -4 + 0.3


def test_translated_partition():
    d = 2.0 ** -5
    part = make_translated_partition(d)
    assert part.psi(0.0) == pytest.approx(1.0)
    assert part.psi(d) == 0.0
    assert part.sum(2.5 * d) == pytest.approx(1.0, abs=1e-12)
    lam = np.linspace(-1, 1, 1001)
    assert np.allclose(part.sum(lam), 1.0, atol=1e-12)


def test_translated_window_covers_band():
    d = 2.0 ** -6
    N = 2.0 ** -2
    part = make_translated_partition(d)
    js = part.active_window(N)
    assert js[0] == math.ceil(N / (2 * d)) and js[-1] == math.floor(2 * N / d)
    lam = np.linspace(N / 2, 2 * N, 400)
    phi = make_bump(N).phi_N(lam)
    assert np.allclose(sum(phi * part.piece(lam, j) for j in js), phi, atol=1e-10)
    outside = [js[0] - 2, js[-1] + 2]
    for j in outside:
        assert np.all(phi * part.piece(lam, j) == 0)


def test_invalid_profiles():
    with pytest.raises(ValueError):
        make_bump(0.0)
    with pytest.raises(ValueError):
        make_bump(1.0, sobolev_s=3.5)
    with pytest.raises(ValueError):
        make_translated_partition(0.0)
