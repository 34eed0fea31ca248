import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpkernels.errors import NotKatoClassError
from lpkernels.potential import (FOUR_PI, PotentialModel, chain_integral_bound, gaussian_potential, kato_norm,
                                 l1_norm, make_potential, radial_kato_integral,
                                 truncate_to_K0, yukawa_potential)


def test_zero_potential_has_zero_norm(zero):
    assert kato_norm(zero).value == 0.0


def test_unit_ball_norm_is_two_pi(unit_ball):
    assert kato_norm(unit_ball).value == pytest.approx(2 * math.pi, rel=1e-6)


def test_yukawa_norm_is_four_pi(yukawa_unit):
    assert kato_norm(yukawa_unit).value == pytest.approx(FOUR_PI, rel=1e-6)


def test_gaussian_norm_matches_closed_form():
    V = gaussian_potential(3.0, 1.0)
    assert kato_norm(V).value == pytest.approx(V.closed_form_kato, rel=1e-6)
    assert V.closed_form_kato == pytest.approx(6 * math.pi)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.3, 3.0))
def test_yukawa_norm_scales_as_amplitude_over_mu(a, mu):
    V = yukawa_potential(a, mu)
    assert kato_norm(V).value == pytest.approx(FOUR_PI * a / mu, rel=1e-6)


def test_norm_is_homogeneous_in_amplitude(unit_ball):
    assert kato_norm(unit_ball.scaled(-3.0)).value == pytest.approx(
        3 * kato_norm(unit_ball).value, rel=1e-9)


def test_kato_integral_at_origin_ball(unit_ball):
    # 4 pi [ (1/a) int_0^a r^2 dr + int_a^1 r dr ] at a = 1/2
    a = 0.5
    expected = FOUR_PI * (a ** 2 / 3 + (1 - a ** 2) / 2)
    assert radial_kato_integral(unit_ball, a)[0] == pytest.approx(expected, rel=1e-8)


def test_l1_norm_of_ball(unit_ball):
    assert l1_norm(unit_ball) == pytest.approx(4 * math.pi / 3, rel=1e-8)


def test_non_kato_profile_is_rejected():
    # |x|^-2.5 near the origin makes int r |V| dr diverge
    bad = PotentialModel(kind="radial-analytic", name="r^-2.5",
                         profile=lambda r: np.asarray(r, dtype=float) ** -2.5,
                         support_radius=1.0, r_eff=1.0)
    with pytest.raises(NotKatoClassError):
        kato_norm(bad)


def test_truncation_of_bounded_compact_potential_is_identity(unit_ball):
    Ve, tail = truncate_to_K0(unit_ball, 0.1)
    assert Ve is unit_ball and tail == 0.0


def test_truncation_of_zero(zero):
    Ve, tail = truncate_to_K0(zero, 0.3)
    assert Ve.is_zero and tail == 0.0


def test_truncation_of_yukawa_meets_tail(yukawa_unit):
    Ve, tail = truncate_to_K0(yukawa_unit, 0.5)
    assert tail <= 0.5
    assert Ve.support_radius is not None and math.isfinite(Ve.support_radius)
    pts = np.array([[0.0, 0.0, 1e-6], [0.0, 0.0, 1e3]])
    assert np.all(np.isfinite(Ve.evaluate(pts)))


def test_chain_bound_base_cases(unit_ball):
    assert chain_integral_bound(unit_ball, 0).value == 1.0
    b1 = chain_integral_bound(unit_ball, 1)
    assert b1.value == pytest.approx(kato_norm(unit_ball).value / FOUR_PI, rel=1e-6)


def test_chain_bound_two_steps_below_square(unit_ball):
    b2 = chain_integral_bound(unit_ball, 2, samples=20000, rng=np.random.default_rng(1))
    assert b2.value <= 0.25 + 3 * b2.stderr


def test_fingerprint_distinguishes_parameters():
    assert yukawa_potential(0.5).fingerprint() != yukawa_potential(0.6).fingerprint()
    assert yukawa_potential(0.5).fingerprint() == yukawa_potential(0.5).fingerprint()


def test_unknown_kind_is_rejected():
    with pytest.raises(ValueError):
        make_potential("coulomb")
