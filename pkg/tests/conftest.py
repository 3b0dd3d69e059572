"""Shared fixtures: small lattices, the cube experiment's parameters and data."""

from pathlib import Path

import numpy as np
import pytest

from chemotaxis_blowup.grid import GridSpec, make_grid
from chemotaxis_blowup.model import InitialData, ModelParams, gaussian_data
from chemotaxis_blowup.solver import SolverConfig

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "config"

UNIT_CUBE = ((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))


def cube_grid(n: int):
    return make_grid(GridSpec(UNIT_CUBE[0], UNIT_CUBE[1], (n, n, n)))


def cube_data(grid, u_amplitude: float = 1000.0) -> InitialData:
    return InitialData(u0=gaussian_data(grid, u_amplitude, 1000.0),
                       v0=gaussian_data(grid, 500.0, 500.0),
                       w0=gaussian_data(grid, 800.0, 800.0))


@pytest.fixture
def grid9():
    return cube_grid(9)


@pytest.fixture
def grid17():
    return cube_grid(17)


@pytest.fixture
def cube_params():
    return ModelParams(chi=2.0, alpha=1.0, beta=1.0, gamma=1.0, delta=1.0, mu=1.0, tau=1)


@pytest.fixture
def unit_params():
    return ModelParams(chi=1.0, alpha=1.0, beta=1.0, gamma=1.0, delta=1.0, mu=1.0, tau=1)


@pytest.fixture
def solver_cfg():
    return SolverConfig(dt=1e-3, t_end=1e-2, cfl_warn=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
