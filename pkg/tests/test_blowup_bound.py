import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import trapezoid

from chemotaxis_blowup.blowup_bound import (DATA_REGULARITY_Q, ScriptConstants, adaptive_simpson,
                                            differential_rhs, evaluate_bound, geometry_constants,
                                            lower_bound_time, payne_constants, payne_inequality_check,
                                            script_constants)
from chemotaxis_blowup.errors import GeometryError
from chemotaxis_blowup.grid import GridSpec, ScalarField
from chemotaxis_blowup.model import MaxBounds, gaussian_data
from tests.conftest import UNIT_CUBE, cube_data, cube_grid

CUBE_PAYNE = payne_constants(0.5, math.sqrt(0.75))


# ---------------------------------------------------------------------------
# geometry

def test_unit_cube_geometry():
    rho, dmax = geometry_constants(GridSpec(UNIT_CUBE[0], UNIT_CUBE[1], (5, 5, 5)))
    assert rho == pytest.approx(0.5)
    assert dmax == pytest.approx(math.sqrt(0.75))


def test_off_center_box_geometry():
    rho, dmax = geometry_constants(GridSpec((-1.0, -0.5, -3.0), (2.0, 0.5, 1.0), (5, 5, 5)))
    assert rho == pytest.approx(0.5)
    assert dmax == pytest.approx(math.sqrt(4.0 + 0.25 + 9.0))


@pytest.mark.parametrize("lo,hi", [((0, 0, 0), (1, 1, 1)), ((-1, -1, 0.1), (1, 1, 1)), ((-1, -1, -1), (1, 0, 1))])
def test_origin_outside_box_rejected(lo, hi):
    with pytest.raises(GeometryError):
        geometry_constants(GridSpec(lo, hi, (5, 5, 5)))


def test_unit_cube_inequality_constants():
    consts = payne_constants(0.5, math.sqrt(0.75))
    assert consts.a1 == pytest.approx(7.34847, rel=1e-5)
    assert consts.a2 == pytest.approx(0.67355, rel=1e-4)
    assert consts.a3 == pytest.approx(6.38628, rel=1e-4)


def test_inequality_constants_need_positive_rho():
    with pytest.raises(GeometryError):
        payne_constants(0.0, 1.0)


def random_bump_field(grid, rng):
    x, y, z = grid.coordinates()
    data = np.zeros(grid.shape)
    for _ in range(rng.integers(1, 4)):
        cx, cy, cz = rng.uniform(-0.3, 0.3, size=3)
        rate = rng.uniform(5.0, 50.0)
        data += rng.uniform(0.1, 10.0) * np.exp(-rate * ((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2))
    return ScalarField(grid, data + rng.uniform(0.0, 1.0, size=grid.shape))


@pytest.mark.parametrize("eps", [0.1, 1.0, 10.0])
def test_inequality_holds_for_sample_fields(grid17, rng, eps):
    consts = payne_constants(*geometry_constants(grid17.spec))
    for _ in range(100):
        assert payne_inequality_check(random_bump_field(grid17, rng), eps, consts)


def test_inequality_check_argument_validation(grid9):
    consts = payne_constants(0.5, math.sqrt(0.75))
    with pytest.raises(ValueError):
        payne_inequality_check(grid9.full(1.0), 0.0, consts)
    with pytest.raises(ValueError):
        payne_inequality_check(grid9.full(-1.0), 1.0, consts)


# ---------------------------------------------------------------------------
# inequality coefficients

def test_parabolic_coefficients_for_cube(cube_params):
    consts = script_constants(cube_params, MaxBounds(1.0, 800.0, 800.0), CUBE_PAYNE, 1.0)
    assert consts.script_c == pytest.approx(2560003.0)
    s = 1.0 + 4.0 * 800.0 ** 2
    assert consts.script_b == pytest.approx(2.0 * CUBE_PAYNE.a1 * (4 * 4.0 / 27.0 + 2.0 * s))
    expected_a = 2 ** 7 * CUBE_PAYNE.a2 * CUBE_PAYNE.a3 ** 3 * (2 ** 8 * 2 ** 8 / 3 ** 12 + 2 ** 4 * s ** 4 / 5 ** 3)
    assert consts.script_a == pytest.approx(expected_a, rel=1e-12)


def test_parabolic_coefficients_without_chemotaxis(cube_params):
    consts = script_constants(replace(cube_params, chi=0.0), MaxBounds(1.0, 1.0, 1.0), CUBE_PAYNE, 1.0)
    assert consts.script_a > 0 and consts.script_b > 0


def test_elliptic_coefficients(unit_params):
    params = replace(unit_params, tau=0)
    consts = script_constants(params, MaxBounds(1.0, 1.0, 1.0), CUBE_PAYNE, 1.0)
    assert consts.script_c == pytest.approx(4.0 / 27.0)
    assert consts.script_a == pytest.approx(CUBE_PAYNE.a2 * CUBE_PAYNE.a3 ** 3 / 8.0)
    assert consts.script_b == pytest.approx(CUBE_PAYNE.a1)
    with pytest.raises(ValueError):
        script_constants(replace(params, chi=0.0), MaxBounds(1.0, 1.0, 1.0), CUBE_PAYNE, 1.0)


def test_differential_rhs_powers():
    consts = ScriptConstants(2.0, 3.0, 5.0)
    assert differential_rhs(4.0, consts, 1) == pytest.approx(2 * 64 + 3 * 8 + 5 * 4)
    assert differential_rhs(4.0, consts, 0) == pytest.approx(2 * 64 + 3 * 8 + 5)


# ---------------------------------------------------------------------------
# quadrature

def test_adaptive_simpson_polynomial_and_peak():
    assert adaptive_simpson(lambda x: x ** 3, 0.0, 2.0) == pytest.approx(4.0, rel=1e-14)
    peak = adaptive_simpson(lambda x: 1.0 / (1e-4 + x * x), -1.0, 1.0)
    assert peak == pytest.approx(2.0 / 1e-2 * math.atan(1.0 / 1e-2), rel=1e-8)


@pytest.mark.parametrize("psi0", [1e-3, 1.0, 250.0])
def test_cubic_only_closed_form(psi0):
    a = 3.7
    assert lower_bound_time(psi0, ScriptConstants(a, 0.0, 0.0), 1) == pytest.approx(
        1.0 / (2.0 * a * psi0 ** 2), rel=1e-10)


@pytest.mark.parametrize("psi0", [1e-2, 1.0, 90.0])
def test_sesquilinear_only_closed_form(psi0):
    b = 0.4
    assert lower_bound_time(psi0, ScriptConstants(0.0, b, 0.0), 1) == pytest.approx(
        2.0 / (b * math.sqrt(psi0)), rel=1e-10)


@pytest.mark.parametrize("psi0", [1e-2, 1.0, 30.0])
def test_cubic_plus_linear_closed_form(psi0):
    a, c = 2.0, 7.0
    expected = math.log(1.0 + c / (a * psi0 ** 2)) / (2.0 * c)
    assert lower_bound_time(psi0, ScriptConstants(a, 0.0, c), 1) == pytest.approx(expected, rel=1e-10)


def log_substituted_integral(psi0, consts, tau):
    s = np.linspace(0.0, 40.0, 400001)
    psi = psi0 * np.exp(s)
    a, b, c = consts
    return trapezoid(psi / (a * psi ** 3 + b * psi ** 1.5 + c * psi ** tau), s)


def test_matches_log_substituted_quadrature(rng):
    for _ in range(20):
        consts = ScriptConstants(*(10.0 ** rng.uniform(-3.0, 3.0, size=3)))
        psi0 = 10.0 ** rng.uniform(-2.0, 2.0)
        tau = int(rng.integers(0, 2))
        assert lower_bound_time(psi0, consts, tau) == pytest.approx(
            log_substituted_integral(psi0, consts, tau), rel=1e-6)


def test_bound_decreases_with_psi0_and_constants():
    consts = ScriptConstants(1.0, 1.0, 1.0)
    times = [lower_bound_time(p, consts, 1) for p in (0.1, 1.0, 10.0)]
    assert times[0] > times[1] > times[2]
    base = lower_bound_time(1.0, consts, 1)
    for i in range(3):
        bigger = list(consts)
        bigger[i] *= 2.0
        assert lower_bound_time(1.0, ScriptConstants(*bigger), 1) < base


@pytest.mark.parametrize("psi0,consts", [
    (0.0, ScriptConstants(1.0, 1.0, 1.0)),
    (-1.0, ScriptConstants(1.0, 1.0, 1.0)),
    (1.0, ScriptConstants(-1.0, 1.0, 1.0)),
    (1.0, ScriptConstants(0.0, 0.0, 1.0)),
])
def test_invalid_bound_inputs(psi0, consts):
    with pytest.raises(ValueError):
        lower_bound_time(psi0, consts, 1)


# ---------------------------------------------------------------------------
# end to end

def test_cube_bound_record(cube_params):
    grid = cube_grid(21)
    bound = evaluate_bound(cube_params, cube_data(grid))
    assert bound.rho == pytest.approx(0.5)
    assert bound.script_c == pytest.approx(2560003.0)
    assert bound.psi0 > 0
    assert 0 < bound.t_lower < 1e-3
    report = bound.to_report()
    for key in ("rho", "d", "A1", "A2", "A3", "scriptA", "scriptB", "scriptC", "psi0", "t_lower"):
        assert math.isfinite(report[key])
    assert report["q"] == DATA_REGULARITY_Q
    assert report["parameters"]["chi"] == 2.0
    assert "psi0_refined" not in report


def test_refined_bound_and_regime_override(cube_params):
    grid = cube_grid(9)
    params = replace(cube_params, chi=1.0)
    data = cube_data(grid, u_amplitude=10.0)
    fine = cube_data(grid.refined(), u_amplitude=10.0)
    bound = evaluate_bound(params, data, refined_data=fine)
    assert bound.psi0_refined > 0 and bound.t_lower_refined > 0
    assert "t_lower_refined" in bound.to_report()

    elliptic = evaluate_bound(params, data, tau=0)
    assert elliptic.tau == 0
    assert elliptic.script_c == pytest.approx(4.0 / 27.0)
    u0 = data.u0
    assert elliptic.psi0 == pytest.approx(float(np.sum(grid.weights * u0.data ** 2)) * grid.cell_volume)


def test_bound_on_box_without_origin_fails(unit_params):
    from chemotaxis_blowup.grid import make_grid
    from chemotaxis_blowup.model import InitialData
    grid = make_grid(GridSpec((0, 0, 0), (1, 1, 1), (5, 5, 5)))
    data = InitialData(gaussian_data(grid, 1.0, 1.0), grid.full(0.0), grid.full(1.0))
    with pytest.raises(GeometryError):
        evaluate_bound(unit_params, data)


def test_inequality_on_trivial_fields(grid9):
    consts = payne_constants(*geometry_constants(grid9.spec))
    assert payne_inequality_check(grid9.zeros(), 1.0, consts)
    assert payne_inequality_check(grid9.full(1.0), 1.0, consts)


def test_inequality_constants_normalised_geometry():
    consts = payne_constants(1.0, 1.0)
    assert consts.a3 == pytest.approx(4.0, rel=1e-14)
    for rho, dmax in ((0.5, 0.9), (2.0, 7.0)):
        other = payne_constants(rho, dmax)
        assert other.a2 / other.a3 == pytest.approx(27.0 / (4.0 ** 3.75 * math.sqrt(2.0)), rel=1e-13)


def test_larger_data_gives_earlier_bound(cube_params):
    grid = cube_grid(9)
    small = evaluate_bound(cube_params, cube_data(grid, u_amplitude=10.0))
    large = evaluate_bound(cube_params, cube_data(grid, u_amplitude=20.0))
    assert large.psi0 > small.psi0
    assert large.t_lower < small.t_lower
