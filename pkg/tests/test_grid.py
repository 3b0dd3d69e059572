import math

import numba
import numpy as np
import pytest

from chemotaxis_blowup.grid import (GridSpec, ScalarField, gradient_sq, integrate, laplacian, linf_norm,
                                    lp_norm, make_grid, partial_derivative, set_worker_threads, weighted_sum)
from chemotaxis_blowup.model import gaussian_data
from tests.conftest import cube_grid


def test_unit_cube_101_geometry():
    grid = cube_grid(101)
    assert grid.spacing == pytest.approx((0.01, 0.01, 0.01), rel=1e-14)
    assert grid.node_count == 101 ** 3
    assert grid.shape == (101, 101, 101)
    assert grid.cell_volume == pytest.approx(1e-6, rel=1e-12)
    assert grid.volume == pytest.approx(1.0)


def test_anisotropic_shape_is_z_y_x():
    grid = make_grid(GridSpec((0, 0, 0), (1, 2, 3), (5, 7, 9)))
    assert grid.shape == (9, 7, 5)
    assert not grid.is_cubic
    x, y, z = grid.coordinates()
    assert x.shape == (1, 1, 5) and y.shape == (1, 7, 1) and z.shape == (9, 1, 1)


@pytest.mark.parametrize("lo,hi,n", [
    ((0, 0, 0), (1, 0, 1), (5, 5, 5)),
    ((0, 0, 0), (1, 1, 1), (5, 2, 5)),
])
def test_invalid_spec_rejected(lo, hi, n):
    with pytest.raises(ValueError):
        make_grid(GridSpec(lo, hi, n))


def test_field_size_checked(grid9):
    with pytest.raises(ValueError):
        ScalarField(grid9, np.zeros(10))


def test_flat_order_is_x_fastest():
    grid = make_grid(GridSpec((0, 0, 0), (1, 1, 1), (3, 4, 5)))
    x, _, _ = grid.coordinates()
    f = ScalarField(grid, np.broadcast_to(x, grid.shape))
    assert np.array_equal(f.values[:3], grid.axis_coordinates(0))


def test_integrate_constant_is_exact():
    grid = make_grid(GridSpec((-1, -0.5, -2), (1, 0.5, 2), (9, 5, 13)))
    assert integrate(grid.full(1.0)) == pytest.approx(8.0, rel=1e-13)


def test_integrate_odd_function_vanishes(grid17):
    x, y, z = grid17.coordinates()
    f = ScalarField(grid17, np.broadcast_to(x * y ** 2 + z, grid17.shape))
    assert abs(integrate(f)) < 1e-14


def test_trapezoid_second_order():
    errors = []
    for n in (9, 17, 33):
        grid = cube_grid(n)
        x, y, z = grid.coordinates()
        f = ScalarField(grid, np.cos(np.pi * x) * np.cos(np.pi * y) * np.cos(np.pi * z))
        errors.append(abs(integrate(f) - (2.0 / np.pi) ** 3))
    assert errors[0] / errors[1] == pytest.approx(4.0, abs=0.2)
    assert errors[1] / errors[2] == pytest.approx(4.0, abs=0.2)


def test_laplacian_annihilates_constants(grid9):
    assert np.array_equal(laplacian(grid9.full(3.7)).data, np.zeros(grid9.shape))


def test_laplacian_of_quadratic_interior(grid17):
    x, y, z = grid17.coordinates()
    f = ScalarField(grid17, np.broadcast_to(x ** 2 + 2 * y ** 2 - z ** 2, grid17.shape))
    lap = laplacian(f).data
    assert np.allclose(lap[1:-1, 1:-1, 1:-1], 2.0 + 4.0 - 2.0, atol=1e-9)


def test_laplacian_weighted_symmetry(grid9, rng):
    a = ScalarField(grid9, rng.random(grid9.shape))
    b = ScalarField(grid9, rng.random(grid9.shape))
    left = weighted_sum(b.like(b.data * laplacian(a).data))
    right = weighted_sum(a.like(a.data * laplacian(b).data))
    assert left == pytest.approx(right, rel=1e-12)


def test_laplacian_is_flux_free(grid17, rng):
    f = ScalarField(grid17, rng.random(grid17.shape))
    lap = laplacian(f)
    scale = weighted_sum(lap.like(np.abs(lap.data)))
    assert abs(weighted_sum(lap)) <= 1e-12 * scale


def test_gradient_of_linear_field(grid9):
    x, y, z = grid9.coordinates()
    f = ScalarField(grid9, np.broadcast_to(3.0 * x, grid9.shape))
    g = gradient_sq(f).data
    assert np.allclose(g[:, :, 1:-1], 9.0)
    # normal derivative vanishes on the x faces
    assert np.allclose(g[:, :, 0], 0.0) and np.allclose(g[:, :, -1], 0.0)


def test_partial_derivative_axes(grid9):
    x, y, z = grid9.coordinates()
    f = ScalarField(grid9, np.broadcast_to(2.0 * x + 5.0 * z, grid9.shape))
    assert np.allclose(partial_derivative(f, 0).data[:, :, 1:-1], 2.0)
    assert np.allclose(partial_derivative(f, 1).data, 0.0)
    assert np.allclose(partial_derivative(f, 2).data[1:-1], 5.0)
    assert np.allclose(partial_derivative(f, 2).data[0], 0.0)


def test_norms(grid9):
    f = grid9.full(-2.0)
    assert linf_norm(f) == 2.0
    assert lp_norm(f, 1) == pytest.approx(2.0)
    assert lp_norm(f, 2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        lp_norm(f, 0.5)


def test_linf_propagates_nan(grid9):
    data = np.zeros(grid9.shape)
    data[1, 2, 3] = np.nan
    assert math.isnan(linf_norm(ScalarField(grid9, data)))


def test_refined_keeps_nodes(grid9):
    fine = grid9.refined()
    assert fine.spec.n == (17, 17, 17)
    assert fine.spacing[0] == pytest.approx(grid9.spacing[0] / 2)
    assert np.allclose(fine.axis_coordinates(0)[::2], grid9.axis_coordinates(0))


def test_grids_compare_by_spec():
    assert cube_grid(9) == cube_grid(9)
    assert cube_grid(9) != cube_grid(11)


def test_worker_threads_clamped():
    limit = numba.config.NUMBA_NUM_THREADS
    previous = numba.get_num_threads()
    try:
        assert set_worker_threads(limit + 5) == limit
        assert set_worker_threads(1) == 1
    finally:
        numba.set_num_threads(previous)


def test_stencils_independent_of_thread_count(grid17, rng):
    f = ScalarField(grid17, rng.random(grid17.shape))
    previous = numba.get_num_threads()
    try:
        set_worker_threads(1)
        one = laplacian(f).data.copy()
        set_worker_threads(numba.config.NUMBA_NUM_THREADS)
        many = laplacian(f).data
    finally:
        numba.set_num_threads(previous)
    assert np.array_equal(one, many)


# ---------------------------------------------------------------------------
# convergence against refined grids and closed forms

def slab_grid(n):
    return make_grid(GridSpec((-0.5, 0.0, 0.0), (0.5, 1.0, 1.0), (n, 3, 3)))


def cosine_mode(grid):
    x, _, _ = grid.coordinates()
    return ScalarField(grid, np.broadcast_to(np.cos(2 * np.pi * x), grid.shape))


def test_laplacian_of_cosine_second_order():
    errors = []
    for n in (17, 33, 65):
        grid = slab_grid(n)
        f = cosine_mode(grid)
        exact = -4 * np.pi ** 2 * f.data
        errors.append(float(np.max(np.abs(laplacian(f).data - exact))))
    assert errors[0] / errors[1] == pytest.approx(4.0, abs=0.05)
    assert errors[1] / errors[2] == pytest.approx(4.0, abs=0.05)


def test_gradient_sq_of_cosine_second_order():
    errors = []
    for n in (17, 33, 65):
        grid = slab_grid(n)
        x, _, _ = grid.coordinates()
        exact = np.broadcast_to(4 * np.pi ** 2 * np.sin(2 * np.pi * x) ** 2, grid.shape)
        errors.append(float(np.max(np.abs(gradient_sq(cosine_mode(grid)).data - exact))))
    assert errors[0] / errors[1] == pytest.approx(4.0, abs=0.1)
    assert errors[1] / errors[2] == pytest.approx(4.0, abs=0.1)


def test_gaussian_integral_and_l2_norm_against_refined_grid():
    coarse, fine = cube_grid(51), cube_grid(101)
    u_coarse, u_fine = gaussian_data(coarse, 1000.0, 1000.0), gaussian_data(fine, 1000.0, 1000.0)
    assert integrate(u_coarse) == pytest.approx(integrate(u_fine), rel=1e-3)
    assert lp_norm(u_coarse, 2) == pytest.approx(lp_norm(u_fine, 2), rel=1e-3)
    # the cube holds all of the Gaussian's mass to double precision
    assert integrate(u_fine) == pytest.approx(1000.0 * (np.pi / 1000.0) ** 1.5, rel=1e-6)
    assert lp_norm(u_fine, 2) == pytest.approx(math.sqrt(1e6 * (np.pi / 2000.0) ** 1.5), rel=1e-6)


def test_integrate_is_linear(grid17, rng):
    f = ScalarField(grid17, rng.random(grid17.shape))
    g = ScalarField(grid17, rng.random(grid17.shape))
    combined = f.like(2.5 * f.data - 0.75 * g.data)
    assert integrate(combined) == pytest.approx(2.5 * integrate(f) - 0.75 * integrate(g), rel=1e-13)
