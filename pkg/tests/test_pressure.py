"""Tests for the spectral pressure and the local pressure representations."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from conftest import EPS
from ulocflow.const import DEFAULT_TOL_PRESS
from ulocflow.const import FAIL
from ulocflow.const import PASS
from ulocflow.exceptions import ValidationError
from ulocflow.kernels import gaussian_blob
from ulocflow.kernels import heat_trajectory
from ulocflow.kernels import riesz_kernel
from ulocflow.lattice import VectorField
from ulocflow.lattice import ball_mask
from ulocflow.lattice import parasitic_trajectory
from ulocflow.lattice import periodic_offsets
from ulocflow.pressure import PRESSURE_CSV_HEADER
from ulocflow.pressure import check_tau
from ulocflow.pressure import cx0_direct
from ulocflow.pressure import decomposition_check
from ulocflow.pressure import pcheck_local
from ulocflow.pressure import phat_array
from ulocflow.pressure import phat_local
from ulocflow.pressure import poisson_defect
from ulocflow.pressure import pressure_spectral
from ulocflow.pressure import pressure_trajectory
from ulocflow.solver import nonlinearity_array
from ulocflow.solver import perturb_w

ORIGIN = (0.0, 0.0, 0.0)


def flux_trajectory(traj):
    data = np.stack([nonlinearity_array(v, traj.grid, EPS) for v in traj.data])
    return traj.with_data(data, EPS)


def test_spectral_pressure_solves_poisson(solve, pressure):
    traj = solve.trajectory
    for n in (0, len(traj) - 1):
        N = nonlinearity_array(traj.data[n], traj.grid, EPS)
        assert poisson_defect(pressure.data[n], N, traj.grid) < 1e-12
        assert abs(np.mean(pressure.data[n])) < 1e-14
    np.testing.assert_allclose(pressure_spectral(flux_trajectory(traj)).data, pressure.data)
    with pytest.raises(ValidationError):
        pressure_spectral(traj)


def test_phat_matches_spectral_pressure(solve, pressure):
    report = decomposition_check(pressure, solve.trajectory, ORIGIN, EPS)
    assert report.verdict == PASS
    assert report.extras["phat_l32"] > 0.0
    rows = report.csv_rows()
    assert len(rows) == len(solve.trajectory)
    assert len(rows[0]) == len(PRESSURE_CSV_HEADER)


def test_phat_defaults_to_spectral_pressure(solve, pressure):
    direct = phat_local(solve.trajectory, (0.5, 0.0, 0.0), EPS)
    supplied = decomposition_check(pressure, solve.trajectory, (0.5, 0.0, 0.0), EPS)
    np.testing.assert_allclose(direct.series, supplied.series)


def test_perturbed_pressure_fails(solve, pressure):
    blob = gaussian_blob(solve.trajectory.grid, 1.0)
    wrong = pressure.with_data(pressure.data + blob[None], EPS)
    assert decomposition_check(wrong, solve.trajectory, ORIGIN, EPS).verdict == FAIL


def test_parasitic_pressure_fails(grid):
    v, p = parasitic_trajectory(grid, np.linspace(0.0, 1.0, 9))
    report = decomposition_check(p, v, ORIGIN)
    assert report.verdict == FAIL
    # p - p_hat is linear in x1, so its spread over B(0, 3/2) is 2 t * 3.
    assert report.variance[-1] == pytest.approx(6.0, rel=1e-9)


def test_centers_must_be_nodes(solve, pressure):
    with pytest.raises(ValidationError):
        decomposition_check(pressure, solve.trajectory, (0.1, 0.0, 0.0), EPS)
    with pytest.raises(ValidationError):
        decomposition_check(pressure, solve.trajectory, (3.0, 0.0, 0.0), EPS)


def test_cx0_direct_matches_series(solve):
    traj = solve.trajectory
    x0 = (0.5, 0.0, 0.0)
    at_x0, at_origin = phat_local(traj, x0, EPS), phat_local(traj, ORIGIN, EPS)
    direct = cx0_direct(traj, x0, 1, EPS)
    # The balls overlap, so the series differ from the far-field sums by at most the two spreads.
    spread = at_x0.variance + at_origin.variance + 1e-12
    assert np.all(np.abs(direct - (at_x0.series - at_origin.series)) <= spread)
    with pytest.raises(ValidationError):
        cx0_direct(traj, (1.0, 0.0, 0.0), 1, EPS)
    with pytest.raises(ValidationError):
        cx0_direct(traj, x0, 3, EPS)


@pytest.mark.parametrize("tau", [1.0, 3.0, 4.0, 6.0])
def test_check_tau_rejects(grid, tau):
    with pytest.raises(ValidationError):
        check_tau(grid, tau)


def test_pcheck_identity(solve, pressure, flow, grid):
    u0 = VectorField(grid, 0.5 * flow.data)
    w = perturb_w(solve.trajectory, u0)
    V = heat_trajectory(u0, solve.trajectory.times)
    report = pcheck_local(w, V, ORIGIN, eps=EPS, p_traj=pressure)
    scale = max(1.0, float(np.max(np.abs(report.ball_values))))
    assert report.extras["identity_defect"] <= DEFAULT_TOL_PRESS * scale
    assert report.verdict == PASS
    assert report.extras["tau"] == 2.0
    assert report.extras["q_bound_ratio"] >= 0.0
    phat = phat_local(solve.trajectory, ORIGIN, EPS, p_traj=pressure)
    np.testing.assert_allclose(
        report.series,
        phat.series + report.extras["q_tilde"] + report.extras["q_hat"],
        atol=report.extras["identity_defect"] + 1e-12,
    )


def test_pcheck_rejects(solve, flow):
    V = heat_trajectory(flow, solve.trajectory.times)
    with pytest.raises(ValidationError):
        pcheck_local(solve.trajectory, V, ORIGIN, tau=5.0, eps=EPS)
    with pytest.raises(ValidationError):
        pcheck_local(solve.trajectory, heat_trajectory(flow, [0.0]), ORIGIN, eps=EPS)


def test_pressure_trajectory_without_mollifier(grid):
    v, p = parasitic_trajectory(grid, np.array([0.0, 0.5]))
    spectral = pressure_trajectory(v, None)
    # Constant flux carries no periodic pressure.
    np.testing.assert_allclose(spectral.data, 0.0, atol=1e-14)


def closed_form_sum(G, grid, x, mask=True):
    offsets = periodic_offsets(grid, x)
    seam = np.zeros(grid.shape, dtype=bool)
    for c in offsets:
        seam |= np.isclose(c, -grid.L)
    kernel = riesz_kernel(*(-c for c in offsets)) * (~seam & mask)
    return np.sum(kernel * G) * grid.cell_volume


def brute_force_phat(G, grid, x0, x):
    near = closed_form_sum(G, grid, x)
    far = closed_form_sum(G, grid, x0, ~ball_mask(grid, x0, 2.0))
    return -np.trace(G[(slice(None), slice(None)) + grid.node_index(x)]) / 3.0 + near - far


def test_phat_is_the_closed_form_kernel_sum(solve, grid):
    G = nonlinearity_array(solve.trajectory.data[-1], grid, EPS)
    x0 = (0.5, 0.0, 0.0)
    local = phat_array(G, grid, x0)
    for x in [(0.5, 0.0, 0.0), (1.0, 0.25, -0.5), (-0.5, 0.75, 0.0)]:
        assert local[grid.node_index(x)] == pytest.approx(brute_force_phat(G, grid, x0, x), rel=1e-9, abs=1e-14)


def test_constant_flux_has_flat_phat(grid):
    v, _ = parasitic_trajectory(grid, np.linspace(0.0, 1.0, 5))
    report = phat_local(v, (0.5, 0.0, 0.0))
    assert np.all(np.ptp(report.ball_values, axis=1) < 1e-12)
    np.testing.assert_allclose(report.tail_bound, 0.0, atol=1e-12)


def test_tail_bound_enters_the_verdict(solve, pressure):
    report = decomposition_check(pressure, solve.trajectory, ORIGIN, EPS)
    assert np.all(report.tail_bound > 0.0)
    near_miss = replace(report, variance=report.tol * report.scale + 0.5 * report.tail_bound)
    assert near_miss.verdict == PASS
    over = replace(report, variance=report.tol * report.scale + 1.5 * report.tail_bound)
    assert over.verdict == FAIL
