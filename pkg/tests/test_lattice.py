"""Tests for the lattice, spectral operators and initial data."""
from __future__ import annotations

import numpy as np
import pytest

from ulocflow.const import DATA_KINDS
from ulocflow.exceptions import ValidationError
from ulocflow.lattice import ScalarField
from ulocflow.lattice import Trajectory
from ulocflow.lattice import VectorField
from ulocflow.lattice import ball_volume
from ulocflow.lattice import check_region
from ulocflow.lattice import curl
from ulocflow.lattice import divergence
from ulocflow.lattice import fft_workers
from ulocflow.lattice import gen_initial_data
from ulocflow.lattice import gradient
from ulocflow.lattice import leray_project
from ulocflow.lattice import make_grid
from ulocflow.lattice import oscillation
from ulocflow.lattice import parasitic_trajectory
from ulocflow.lattice import spectral_gradient


@pytest.mark.parametrize(
    "N, L, relaxed",
    [(24, 8.0, False), (8, 1.0, True), (64, 4.0, False), (16, 8.0, False), (32, -1.0, True)],
)
def test_make_grid_rejects(N, L, relaxed):
    with pytest.raises(ValidationError):
        make_grid(N, L, relaxed=relaxed)


def test_make_grid_spacing(grid):
    assert grid.h == pytest.approx(0.25)
    assert grid.axis[0] == -4.0
    assert grid.is_node((0.0, 0.25, -1.0))
    assert not grid.is_node((0.1, 0.0, 0.0))


def test_fft_workers_env(monkeypatch):
    monkeypatch.setenv("ULOCFLOW_THREADS", "2")
    assert fft_workers() == 2
    monkeypatch.setenv("ULOCFLOW_THREADS", "zero")
    with pytest.raises(ValidationError):
        fft_workers()


def test_field_shape_checked(grid):
    with pytest.raises(ValidationError):
        VectorField(grid, np.zeros(grid.shape))
    with pytest.raises(ValidationError):
        ScalarField(grid, np.full(grid.shape, np.nan))


def test_spectral_gradient_of_mode(grid):
    k = 2.0 * np.pi / grid.L
    x1, _, _ = grid.coords
    a = np.broadcast_to(np.sin(k * x1), grid.shape)
    out = spectral_gradient(a, grid)
    assert out.shape == (3,) + grid.shape
    np.testing.assert_allclose(out[0], np.broadcast_to(k * np.cos(k * x1), grid.shape), atol=1e-12)
    np.testing.assert_allclose(out[1:], 0.0, atol=1e-12)


def test_leray_projection(grid):
    rng = np.random.default_rng(3)
    v = VectorField(grid, rng.standard_normal((3,) + grid.shape))
    pv = leray_project(v)
    scale = np.max(np.abs(v.data))
    assert np.max(np.abs(divergence(pv).data)) < 1e-10 * scale * grid.N
    np.testing.assert_allclose(leray_project(pv).data, pv.data, atol=1e-12 * scale)


def test_curl_of_gradient_vanishes(grid):
    r2 = np.broadcast_to(sum(c**2 for c in grid.coords), grid.shape)
    f = ScalarField(grid, np.exp(-r2))
    assert np.max(np.abs(curl(gradient(f)).data)) < 1e-12


@pytest.mark.parametrize("kind", DATA_KINDS)
def test_initial_data_split(grid, kind):
    params = {"radius": 1.0, "amplitude": 0.5}
    v0, w0, u0 = gen_initial_data(kind, params, grid)
    np.testing.assert_allclose(v0.data, w0.data + u0.data)
    assert np.max(np.abs(divergence(v0).data)) < 1e-10


def test_initial_data_rejects(grid):
    with pytest.raises(ValidationError):
        gen_initial_data("vortex_ring", {}, grid)
    with pytest.raises(ValidationError):
        gen_initial_data("compact_bump", {"radius": 2.0}, grid)
    with pytest.raises(ValidationError):
        gen_initial_data("slow_oscillation_shear", {"profile": "cubic"}, grid)
    with pytest.raises(ValidationError):
        gen_initial_data("fixed_wave", {"amplitude": 5.0, "bound": 1.0}, grid)


def test_compact_bump_split(grid):
    _, w0, u0 = gen_initial_data("compact_bump", {"radius": 1.0}, grid)
    assert not np.any(u0.data)
    assert np.max(np.abs(w0.data)) > 0


def test_check_region(grid):
    check_region(grid, (0.0, 0.0, 0.0), 4.0)
    with pytest.raises(ValidationError):
        check_region(grid, (3.5, 0.0, 0.0), 1.0)
    with pytest.raises(ValidationError):
        check_region(grid, (0.0, 0.0), 1.0)


def test_ball_volume_close_to_continuum(grid):
    assert ball_volume(grid, 1.0) == pytest.approx(4.0 * np.pi / 3.0, rel=0.1)


def test_cube_oscillation_of_linear_function(grid):
    x1 = ScalarField(grid, np.broadcast_to(grid.coords[0], grid.shape))
    assert oscillation(x1, (0.0, 0.0, 0.0), 1.0, "cube") == pytest.approx(4.0, rel=1e-12)


def test_oscillation_ignores_constants(grid, flow):
    shifted = VectorField(grid, flow.data + np.array([1.0, -2.0, 0.5])[:, None, None, None])
    for region in ("ball", "cube"):
        assert oscillation(shifted, (0.5, 0.0, 0.0), 1.0, region) == pytest.approx(
            oscillation(flow, (0.5, 0.0, 0.0), 1.0, region), rel=1e-10
        )
    with pytest.raises(ValidationError):
        oscillation(flow, (0.0, 0.0, 0.0), 1.0, "sphere")


def test_trajectory_validation(grid):
    data = np.zeros((2, 3) + grid.shape)
    with pytest.raises(ValidationError):
        Trajectory(grid, np.array([0.5, 0.25]), data)
    traj = Trajectory(grid, np.array([0.0, 0.25]), data)
    assert traj.index_of(0.25) == 1
    assert traj.components == (3,)
    with pytest.raises(ValidationError):
        traj.index_of(0.1)
    with pytest.raises(ValidationError):
        traj.window(0.0, 1.0)


def test_parasitic_trajectory(grid):
    times = np.linspace(0.0, 1.0, 5)
    v, p = parasitic_trajectory(grid, times)
    assert v.data.shape == (5, 3) + grid.shape
    np.testing.assert_allclose(v.data[:, 0, 0, 0, 0], times**2)
    x1 = grid.coords[0]
    np.testing.assert_allclose(p.data[-1], np.broadcast_to(-2.0 * x1, grid.shape))
    with pytest.raises(ValidationError):
        parasitic_trajectory(grid, times, profile="cubic")
