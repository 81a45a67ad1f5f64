"""Shared fixtures: small lattices and a converged reference solve."""
from __future__ import annotations

import numpy as np
import pytest

from ulocflow.kernels import gaussian_blob
from ulocflow.lattice import Grid
from ulocflow.lattice import VectorField
from ulocflow.lattice import curl
from ulocflow.lattice import make_grid
from ulocflow.pressure import pressure_trajectory
from ulocflow.solver import MildSolveConfig
from ulocflow.solver import picard_mild_solve

EPS = 1.0
WINDOW = 0.125
DT = 1.0 / 128.0


def vortex(grid: Grid, amplitude: float = 0.2, sigma: float = 0.8, center=(0.0, 0.0, 0.0)) -> VectorField:
    """Return the divergence-free curl of a Gaussian stream function along x3."""
    stream = np.zeros((3,) + grid.shape)
    stream[2] = amplitude * gaussian_blob(grid, sigma, center)
    return curl(VectorField(grid, stream))


def base_config(tmp_path) -> dict:
    """Return a raw config that validates on the smallest admissible grid."""
    return {
        "grid": {"N": 64, "L": 8.0},
        "data": {"kind": "compact_bump", "params": {"amplitude": 0.0, "radius": 1.0}},
        "solver": {"epsilon_list": [1.0, 0.5], "T_total": 0.25, "dt": 1.0 / 64.0},
        "pressure": {"centers": [[0.0, 0.0, 0.0]]},
        "diagnostics": {
            "R_list": [1.0, 2.0],
            "t_list": [0.125, 0.25],
            "probes": [[0.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            "test_functions": [{"center": [0.0, 0.0, 0.0], "radius": 2.0}],
            "tol_weak": 1e-2,
        },
        "output": {"dir": str(tmp_path / "out"), "formats": ["csv"]},
    }


@pytest.fixture(scope="session")
def grid() -> Grid:
    """Return a relaxed 32^3 lattice on [-4, 4)^3."""
    return make_grid(32, 4.0, relaxed=True)


@pytest.fixture(scope="session")
def flow(grid: Grid) -> VectorField:
    """Return small smooth initial data."""
    return vortex(grid)


@pytest.fixture(scope="session")
def solve(flow: VectorField):
    """Return a converged Picard solve of the localized-mollified system."""
    return picard_mild_solve(flow, MildSolveConfig(EPS, WINDOW, DT))


@pytest.fixture(scope="session")
def pressure(solve):
    """Return the pressure of the reference solve."""
    return pressure_trajectory(solve.trajectory, EPS)
