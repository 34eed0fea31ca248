import math

import numpy as np
import pytest

from lpkernels.errors import DiagonalSingularityError
from lpkernels.potential import FOUR_PI, gaussian_potential, kato_norm
from lpkernels.resolvent_ops import (B_difference, assemble_VR0, build_B_majorant,
                                     free_resolvent_kernel, grid_for_potential, grid_tolerance,
                                     invert_S, kernel_diff_sup, uniform_S_tilde_bound,
                                     weighted_l1_norm)


@pytest.fixture(scope="module")
def ball_grid():
    from lpkernels.potential import ball_potential
    V = ball_potential(1.0, 1.0)
    return V, grid_for_potential(V, n_panels=6, n_radial=3, n_theta=5)


@pytest.fixture(scope="module")
def gauss_grid():
    V = gaussian_potential(0.5, 1.0)
    return V, grid_for_potential(V, n_panels=6, n_radial=3, n_theta=5)


def test_free_kernel_values():
    x, y = np.zeros(3), np.array([1.0, 0, 0])
    assert free_resolvent_kernel(0.0, "plus", x, y) == pytest.approx(1 / FOUR_PI)
    assert free_resolvent_kernel(math.pi, "plus", x, y) == pytest.approx(-1 / FOUR_PI)
    y = np.array([0.5, 0, 0])
    a = free_resolvent_kernel(2.0, "plus", x, y)
    b = free_resolvent_kernel(2.0, "minus", x, y)
    assert a == pytest.approx(np.conj(b))
    with pytest.raises(DiagonalSingularityError):
        free_resolvent_kernel(1.0, "plus", x, x)


def test_zero_potential_operators(zero, ball_grid):
    _, grid = ball_grid
    assert assemble_VR0(zero, 1.0, grid).l1_norm == 0.0
    inv = invert_S(zero, 1.0, grid)
    assert np.array_equal(inv.S.matrix, np.eye(grid.size))
    assert inv.S_tilde.l1_norm == 0.0
    assert uniform_S_tilde_bound(zero, [0.0, 1.0], grid) == 0.0
    op, _ = build_B_majorant(zero, 0.1, grid)
    assert op.l1_norm == 0.0


def test_VR0_norm_below_kato_bound(ball_grid):
    V, grid = ball_grid
    bound = kato_norm(V).value / FOUR_PI + 2 * grid_tolerance(V, grid)
    norms = [assemble_VR0(V, lam, grid).l1_norm for lam in (0.0, 0.7, 3.0, 10.0)]
    assert max(norms) <= bound
    # only the analytic diagonal cell depends on lam, so the norm is flat
    assert max(norms) - min(norms) <= 1e-9 * max(norms)


def test_inversion_residual_and_neumann_bound(gauss_grid):
    V, grid = gauss_grid
    inv = invert_S(V, 1.3, grid)
    assert inv.residual <= 1e-8
    A = assemble_VR0(V, 1.3, grid).matrix
    q = weighted_l1_norm(np.abs(A), grid.weights)
    assert q < 1
    assert inv.S_tilde.l1_norm <= q / (1 - q) + 1e-10
    # discretized Neumann series reproduces S_tilde
    term, acc = np.eye(grid.size), np.zeros_like(A)
    for _ in range(60):
        term = -term @ A
        acc = acc + term
    assert np.allclose(acc, inv.S_tilde.matrix, atol=1e-10)


def test_uniform_bound_is_monotone_in_samples(gauss_grid):
    V, grid = gauss_grid
    a = uniform_S_tilde_bound(V, [0.0, 1.0], grid)
    b = uniform_S_tilde_bound(V, [0.0, 1.0, 2.5], grid)
    assert b >= a


def test_B_difference_properties(gauss_grid):
    V, grid = gauss_grid
    assert B_difference(V, 0.4, 0.4, grid).l1_norm == 0.0
    B = B_difference(V, 0.5, 0.3, grid).matrix
    assert np.allclose(B, -B_difference(V, 0.3, 0.5, grid).matrix)
    # mean value theorem on e^{i lam r}/(4 pi r)
    v = np.abs(V.evaluate(grid.nodes))
    off = ~np.eye(grid.size, dtype=bool)
    bound = v[:, None] * 0.2 / FOUR_PI * grid.weights[None, :]
    assert np.all(np.abs(B)[off] <= bound[off] * (1 + 1e-12))


def test_B_majorant_dominates(gauss_grid, rng):
    V, grid = gauss_grid
    op, delta = build_B_majorant(V, 0.1, grid)
    assert op.l1_norm < 0.1
    for _ in range(20):
        lam0 = rng.uniform(0, 4)
        lam = lam0 + rng.uniform(-1, 1) * delta
        assert np.all(np.abs(B_difference(V, lam, lam0, grid).matrix) <= op.matrix + 1e-15)


def test_kernel_diff_sup():
    assert kernel_diff_sup(0.0) == 0.0
    assert kernel_diff_sup(1.0) == pytest.approx(1 / (2 * math.pi), rel=1e-9)
    for lam in (0.5, 2.0, 8.0):
        assert kernel_diff_sup(lam) <= lam / (2 * math.pi) + 1e-9
