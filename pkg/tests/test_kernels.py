"""Tests for the heat, Oseen, Duhamel and Riesz kernels and the bound suites."""
from __future__ import annotations

import numpy as np
import pytest

import ulocflow.kernels
from ulocflow.const import FAIL
from ulocflow.exceptions import ValidationError
from ulocflow.kernels import BOUND_CSV_HEADER
from ulocflow.kernels import duhamel
from ulocflow.kernels import duhamel_order_check
from ulocflow.kernels import gaussian_blob
from ulocflow.kernels import heat_apply
from ulocflow.kernels import heat_trajectory
from ulocflow.kernels import heat_uloc_bound_check
from ulocflow.kernels import oseen_apply
from ulocflow.kernels import oseen_bound_check
from ulocflow.kernels import oseen_composition
from ulocflow.kernels import oseen_composition_check
from ulocflow.kernels import oseen_direct
from ulocflow.kernels import riesz_contract_array
from ulocflow.kernels import riesz_contract_at
from ulocflow.kernels import riesz_contract_spectral_array
from ulocflow.kernels import riesz_gradient_contract_array
from ulocflow.kernels import riesz_gradient_contract_at
from ulocflow.kernels import riesz_gradient_contract_spectral_array
from ulocflow.kernels import riesz_gradient_table
from ulocflow.kernels import riesz_lattice_check
from ulocflow.kernels import riesz_pv_convolve
from ulocflow.kernels import riesz_table
from ulocflow.kernels import riesz_tail_bound
from ulocflow.kernels import run_kernel_suites
from ulocflow.lattice import ScalarField
from ulocflow.lattice import TensorField
from ulocflow.lattice import Trajectory
from ulocflow.lattice import ball_mask
from ulocflow.lattice import divergence
from ulocflow.lattice import make_grid
from ulocflow.lattice import periodic_distance


def blob_tensor(grid) -> TensorField:
    blob = gaussian_blob(grid, 0.6)
    return TensorField(grid, np.einsum("i,j,...->ij...", [1.0, 0.5, -0.3], [0.2, 1.0, 0.4], blob))


def test_heat_semigroup(flow):
    twice = heat_apply(heat_apply(flow, 0.05), 0.1)
    np.testing.assert_allclose(twice.data, heat_apply(flow, 0.15).data, atol=1e-12)
    assert twice.time == pytest.approx(0.15)


def test_heat_direct_matches_spectral(flow):
    spectral = heat_apply(flow, 0.1).data
    direct = heat_apply(flow, 0.1, method="direct").data
    assert np.max(np.abs(direct - spectral)) <= 1e-6 * np.max(np.abs(spectral))


def test_heat_rejects_negative_time(flow):
    with pytest.raises(ValidationError):
        heat_apply(flow, -0.1)
    with pytest.raises(ValidationError):
        heat_apply(flow, 0.1, method="fast")


def test_heat_trajectory_starts_at_data(flow):
    traj = heat_trajectory(flow, [0.0, 0.1])
    np.testing.assert_allclose(traj.data[0], flow.data, atol=1e-14)


def test_oseen_output_is_divergence_free(grid):
    out = oseen_apply(blob_tensor(grid), 0.05)
    assert np.max(np.abs(divergence(out).data)) < 1e-10


def test_oseen_composition_and_direct(grid):
    F = blob_tensor(grid)
    spectral = oseen_apply(F, 0.05).data
    np.testing.assert_allclose(oseen_composition(F, 0.05).data, spectral, atol=1e-12)
    points = np.array([[0.0, 0.0, 0.0], [0.5, -0.25, 0.0]])
    direct = oseen_direct(F, 0.05, points)
    expected = np.array([spectral[(slice(None),) + grid.node_index(x)] for x in points])
    np.testing.assert_allclose(direct, expected, atol=1e-8 * np.max(np.abs(spectral)))
    with pytest.raises(ValidationError):
        oseen_apply(F, 0.0)


def test_oseen_decay_exponent():
    (report,) = oseen_bound_check(orders=((0, 0),))
    assert report.passed
    assert report.details["slope"] == pytest.approx(-3.0, abs=0.15)
    assert len(report.csv_row()) == len(BOUND_CSV_HEADER)


def test_duhamel_of_steady_source(grid):
    times = np.linspace(0.0, 0.25, 9)
    F = blob_tensor(grid)
    traj = Trajectory(grid, times, np.broadcast_to(F.data, (len(times),) + F.data.shape))
    psi = duhamel(traj, 0.25)
    assert psi.time == 0.25
    assert np.max(np.abs(divergence(psi).data)) < 1e-10
    with pytest.raises(ValidationError):
        duhamel(traj, 0.3)


def test_duhamel_is_second_order(grid):
    report = duhamel_order_check(grid)
    assert report.passed
    assert report.fitted_C >= 1.8


def test_riesz_table_is_closed_form(grid):
    table = riesz_table(grid)
    half = grid.N // 2
    for m in (1, 2, 4, 8):
        r = m * grid.h
        assert table[0, 0, half + m, half, half] == pytest.approx(2.0 / (4.0 * np.pi * r**3), rel=1e-12)
        assert table[1, 1, half + m, half, half] == pytest.approx(-1.0 / (4.0 * np.pi * r**3), rel=1e-12)
        assert table[0, 1, half + m, half, half] == 0.0
    a = 3 * grid.h
    expected = 3.0 * a * a / (4.0 * np.pi * (np.sqrt(2.0) * a) ** 5)
    assert table[0, 1, half + 3, half + 3, half] == pytest.approx(expected, rel=1e-12)
    assert np.all(table[:, :, half, half, half] == 0.0)
    assert np.all(table[:, :, 0] == 0.0)
    np.testing.assert_allclose(np.einsum("ii...->...", table), 0.0, atol=1e-10)
    np.testing.assert_allclose(table.sum(axis=(-3, -2, -1)), 0.0, atol=1e-9)


def test_riesz_gradient_table_is_closed_form(grid):
    table = riesz_gradient_table(grid)
    half = grid.N // 2
    r = 2 * grid.h
    assert table[0, half + 2, half, half] == pytest.approx(-1.0 / (4.0 * np.pi * r**2), rel=1e-12)
    assert table[0, half - 2, half, half] == pytest.approx(1.0 / (4.0 * np.pi * r**2), rel=1e-12)
    np.testing.assert_allclose(table.sum(axis=(-3, -2, -1)), 0.0, atol=1e-9)


def test_riesz_direct_sum_matches_lattice_convolution(grid):
    G = blob_tensor(grid).data
    x0 = (0.5, 0.0, -0.25)
    lattice = riesz_contract_array(G, grid)[grid.node_index(x0)]
    assert riesz_contract_at(G, grid, x0) == pytest.approx(lattice, rel=1e-9, abs=1e-12)
    H = G[0]
    gradient = riesz_gradient_contract_array(H, grid)[grid.node_index(x0)]
    assert riesz_gradient_contract_at(H, grid, x0) == pytest.approx(gradient, rel=1e-9, abs=1e-12)
    with pytest.raises(ValidationError):
        riesz_contract_at(G, grid, (0.1, 0.0, 0.0))


def test_riesz_lattice_sum_matches_symbol():
    grid = make_grid(64, 8.0)
    blob = gaussian_blob(grid, 1.0)
    G = np.einsum("i,j,...->ij...", [1.0, 0.5, -0.3], [0.2, 1.0, 0.4], blob)
    interior = periodic_distance(grid, (0.0, 0.0, 0.0)) <= grid.L / 2
    spectral = riesz_contract_spectral_array(G, grid)[interior]
    lattice = riesz_contract_array(G, grid)[interior]
    assert np.max(np.abs(lattice - spectral)) <= 5e-2 * np.max(np.abs(spectral))
    H = G[0]
    spectral = riesz_gradient_contract_spectral_array(H, grid)[interior]
    lattice = riesz_gradient_contract_array(H, grid)[interior]
    assert np.max(np.abs(lattice - spectral)) <= 1e-1 * np.max(np.abs(spectral))
    assert all(report.passed for report in riesz_lattice_check())


def test_riesz_constant_data_has_no_tail(grid):
    ones = np.ones((3, 3) + grid.shape)
    np.testing.assert_allclose(riesz_contract_array(ones, grid), 0.0, atol=1e-9)
    assert riesz_tail_bound(ones, grid, 1.5) == 0.0
    assert riesz_tail_bound(blob_tensor(grid).data, grid, 1.5) > 0.0


def test_riesz_pv_split_against_direct_sum(grid):
    blob = gaussian_blob(grid, 0.6, center=(0.5, 0.0, 0.0))
    g = ScalarField(grid, blob)
    x0 = (0.0, 0.0, 0.0)
    report = riesz_pv_convolve(g, x0, 0, 1, radius=1.5, evaluation_radius=1.0)
    x = (0.25, -0.25, 0.0)
    G = np.zeros((3, 3) + grid.shape)
    G[0, 1] = blob
    expected = riesz_contract_at(G, grid, x) - riesz_contract_at(G * ~ball_mask(grid, x0, 1.5), grid, x0)
    assert report.total.data[grid.node_index(x)] == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert report.tail_bound > 0.0


def test_riesz_pv_constant_ball(grid):
    g = ScalarField(grid, np.ones(grid.shape))
    report = riesz_pv_convolve(g, (0.0, 0.0, 0.0), 0, 0, radius=2.0)
    assert abs(report.near.data[grid.node_index((0.0, 0.0, 0.0))]) < 1e-10
    np.testing.assert_allclose(report.total.data, report.near.data + report.far.data)


def test_heat_uloc_bound_is_finite(flow):
    report = heat_uloc_bound_check(flow, 2.0, np.inf, np.geomspace(0.01, 1.0, 4))
    assert report.passed
    assert report.n_samples == 4
    with pytest.raises(ValidationError):
        heat_uloc_bound_check(flow, 3.0, 2.0, [0.1])


def test_flipped_oseen_symbol_fails_composition_check(grid, monkeypatch):
    F = blob_tensor(grid)
    assert oseen_composition_check(F, 0.05).passed
    original = ulocflow.kernels.oseen_symbol
    monkeypatch.setattr(ulocflow.kernels, "oseen_symbol", lambda g, t: -original(g, t))
    report = oseen_composition_check(F, 0.05)
    assert report.verdict == FAIL
    assert report.fitted_C == pytest.approx(2.0, rel=1e-9)


@pytest.mark.slow
def test_kernel_suite_mutation_control(monkeypatch):
    reports = {r.check_name: r for r in run_kernel_suites(16)}
    assert reports["oseen_composition"].passed
    original = ulocflow.kernels.oseen_symbol
    monkeypatch.setattr(ulocflow.kernels, "oseen_symbol", lambda g, t: -original(g, t))
    mutated = {r.check_name: r for r in run_kernel_suites(16)}
    assert not mutated["oseen_composition"].passed
