import numpy as np
import pytest

from lpkernels import prolate
from lpkernels.potential import ball_potential, gaussian_potential


def test_graded_rule_integrates_polynomials():
    x, w = prolate.graded_rule(0.0, 2.0, 4, 8, points=[0.7])
    assert np.dot(w, x ** 5) == pytest.approx(2.0 ** 6 / 6, rel=1e-12)


def test_two_focus_integral_of_ball_matches_direct_quadrature():
    # int_{|z|<=1} dz / (|z - x| |z - y|) against a spherical-coordinate Monte Carlo-free rule
    V = ball_potential(1.0, 1.0)
    x, y = np.array([0.3, 0.0, 0.0]), np.array([-0.2, 0.4, 0.0])
    val, err = prolate.two_focus_integral(V, x, y, lambda s: np.ones_like(s), tol=1e-8,
                                          max_doublings=3)
    r, wr = prolate.panel_rule(0, 1, 40, 10)
    mu, wmu = prolate.gauss(40)
    ph = np.linspace(0, 2 * np.pi, 80, endpoint=False)
    st = np.sqrt(1 - mu * mu)
    dirs = np.stack([st[:, None] * np.cos(ph), st[:, None] * np.sin(ph),
                     np.repeat(mu[:, None], ph.size, 1)], -1)
    z = r[:, None, None, None] * dirs[None]
    f = 1 / (np.linalg.norm(z - x, axis=-1) * np.linalg.norm(z - y, axis=-1))
    direct = np.einsum("i,j,ijk->", wr * r * r, wmu, f) * 2 * np.pi / ph.size
    assert val == pytest.approx(direct, rel=2e-3)


def test_coincident_limit_is_continuous():
    V = gaussian_potential(1.0, 1.0)
    x = np.array([0.2, 0.1, 0.0])
    w = lambda s: np.exp(-s)
    c, _ = prolate.coincident_integral(V, x, w, tol=1e-8)
    near, _ = prolate.two_focus_integral(V, x, x + np.array([1e-4, 0, 0]), w, tol=1e-8)
    assert near == pytest.approx(c, rel=1e-3)


def test_filon_weights_match_gauss_rule():
    order = 6
    t, _ = prolate.gauss(64)
    for omega in (0.5, 20.0):
        W = prolate.filon_weights(order, omega)[0]
        nodes, _ = prolate.gauss(order)
        # integrate exp(i omega t) t^2 exactly via the interpolant
        approx = np.dot(W, nodes ** 2)
        exact = np.dot(prolate.gauss(64)[1], np.exp(1j * omega * t) * t ** 2)
        assert approx == pytest.approx(exact, rel=1e-10, abs=1e-12)
