import math

import numpy as np
import pytest

from lpkernels import oracle
from lpkernels.born_series import free_LP_kernel
from lpkernels.potential import ball_potential, zero_potential


@pytest.fixture(scope="module")
def free_disc():
    return oracle.RadialDiscretization(zero_potential(), R_max=20.0, h=0.01, l_max=30)


@pytest.fixture(scope="module")
def well():
    disc = oracle.RadialDiscretization(ball_potential(-10.0, 1.0), R_max=20.0, h=0.02, l_max=4)
    return oracle.spectral_data(disc, window=(0.0, 40.0), l_values=range(3))


def test_dirichlet_spectrum(free_disc):
    d, e = oracle.assemble_radial_hamiltonian(0, free_disc)
    from scipy.linalg import eigh_tridiagonal
    vals = eigh_tridiagonal(d, e, eigvals_only=True)[:20]
    k = np.arange(1, 21)
    assert np.allclose(vals, (k * math.pi / free_disc.R_max) ** 2, rtol=1e-3)


def test_centrifugal_term_raises_bottom(free_disc):
    from scipy.linalg import eigh_tridiagonal
    e0 = eigh_tridiagonal(*oracle.assemble_radial_hamiltonian(0, free_disc), eigvals_only=True)
    e1 = eigh_tridiagonal(*oracle.assemble_radial_hamiltonian(1, free_disc), eigvals_only=True)
    assert e1[0] > e0[0]


def test_completeness_per_channel(free_disc):
    spec = oracle.spectral_data(free_disc, l_values=[0])
    vals, vecs = spec.channel(0)
    assert vals.size == free_disc.size
    i = 150
    assert np.sum(vecs[i] ** 2) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("rho", [0.0, 0.6, 2.0])
def test_free_band_kernel(rho):
    x, y = np.zeros(3), np.array([rho, 0, 0])
    o = oracle.projection_kernel_oracle(1.0, x, y, zero_potential())
    ref = free_LP_kernel(1.0, x, y)
    assert abs(o - ref) <= 1e-2 * free_LP_kernel(1.0, x, x)


def test_kernel_is_symmetric():
    V = ball_potential(0.5, 1.0)
    disc = oracle.RadialDiscretization.for_band(V, 2.0, 1.0, k_min=0.5)
    spec = oracle.spectral_data(disc, oracle.band_window(1.0))
    x, y = np.array([0.3, 0.2, 0.0]), np.array([-0.1, 0.6, 0.4])
    m = oracle.band_multiplier(1.0)
    assert oracle.multiplier_kernel(m, x, y, spec) == pytest.approx(
        oracle.multiplier_kernel(m, y, x, spec), rel=1e-12)


def test_deep_well_has_bound_state(well):
    assert len(well.negative_eigenvalues) >= 1
    assert well.negative_eigenvalues[0][1] == 0


def test_continuous_projection_is_idempotent(well):
    r = well.disc.r
    f = r * np.exp(-r ** 2)
    once = oracle.continuous_projection_apply(f, well)
    twice = oracle.continuous_projection_apply(once, well)
    assert np.max(np.abs(twice - once)) <= 1e-10 * np.max(np.abs(f))
    _, vecs = well.bound_states(0)
    assert np.max(np.abs(vecs.T @ once)) <= 1e-10


def test_free_projection_is_identity(free_disc):
    spec = oracle.spectral_data(free_disc, window=(0.0, 1.0), l_values=[0])
    f = free_disc.r * np.exp(-free_disc.r)
    assert np.array_equal(oracle.continuous_projection_apply(f, spec), f)


def test_negative_energies_ignored_by_band_multiplier(well):
    m = oracle.band_multiplier(2.0)
    x, y = np.array([0.3, 0, 0]), np.array([0, 0.4, 0])
    a = oracle.multiplier_kernel(m, x, y, well, tol=1.0)
    b = oracle.multiplier_kernel(m, x, y, well, tol=1.0, include_negative=True)
    assert a == b


def test_window_additivity(well):
    x, y = np.array([0.3, 0, 0]), np.array([0, 0.4, 0])
    kw = dict(x=x, y=y, spectral=well)
    full = oracle.multiplier_kernel(oracle.window_multiplier(1.0, 4.0, 1.0), tol=1.0, **kw)
    parts = (oracle.multiplier_kernel(oracle.window_multiplier(1.0, 2.0, 1.0), tol=1.0, **kw)
             + oracle.multiplier_kernel(oracle.window_multiplier(4.0, 4.0, 1.0), tol=1.0, **kw))
    assert full == pytest.approx(parts, rel=1e-12)


def test_points_outside_box_are_rejected(free_disc):
    spec = oracle.spectral_data(free_disc, window=(0.0, 1.0), l_values=[0])
    with pytest.raises(ValueError):
        oracle.multiplier_kernel(lambda E: E, np.zeros(3), np.array([15.0, 0, 0]), spec)


def test_spectral_cache_round_trip(tmp_path):
    V = ball_potential(-2.0, 1.0)
    disc = oracle.RadialDiscretization(V, R_max=10.0, h=0.05, l_max=2)
    a = oracle.spectral_data(disc, (0.0, 5.0), cache_dir=str(tmp_path))
    b = oracle.spectral_data(disc, (0.0, 5.0), cache_dir=str(tmp_path))
    assert any(tmp_path.iterdir())
    for l in range(3):
        assert np.array_equal(a.channel(l)[0], b.channel(l)[0])
