"""Tests for space-time test functions."""
from __future__ import annotations

import numpy as np
import pytest

from ulocflow.exceptions import ValidationError
from ulocflow.lattice import make_grid
from ulocflow.lattice import spectral_gradient
from ulocflow.lattice import spectral_laplacian
from ulocflow.localization import TestFunction
from ulocflow.localization import smooth_step
from ulocflow.localization import window_test_functions


def test_smooth_step_limits():
    theta, dtheta = smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    np.testing.assert_allclose(theta, [0.0, 0.0, 0.5, 1.0, 1.0])
    assert dtheta[0] == 0.0 and dtheta[-1] == 0.0
    assert dtheta[2] > 0.0


def check_closed_form(tf, grid):
    psi, grad, lap = tf.space(grid)
    assert np.all(psi >= 0.0)
    scale = np.max(np.abs(grad))
    assert np.max(np.abs(spectral_gradient(psi, grid) - grad)) < 0.05 * scale
    assert np.max(np.abs(spectral_laplacian(psi, grid) - lap)) < 0.1 * np.max(np.abs(lap))


def test_bump_derivatives(grid):
    check_closed_form(TestFunction(radius=2.0), grid)


def test_localized_derivatives():
    fine = make_grid(64, 4.0, relaxed=True)
    tf = TestFunction(kind="localized", R=1.0)
    check_closed_form(tf, fine)
    psi, _, _ = tf.space(fine)
    assert psi[fine.node_index((0.0, 0.0, 0.0))] == 0.0
    assert psi[fine.node_index((1.75, 0.0, 0.0))] == 0.0


def test_bump_support(grid):
    psi, _, _ = TestFunction(center=(1.0, 0.0, 0.0), radius=1.0).space(grid)
    assert psi[grid.node_index((1.0, 0.0, 0.0))] == 1.0
    assert psi[grid.node_index((2.0, 0.0, 0.0))] == 0.0


def test_time_factor_vanishes_at_ends():
    tf = TestFunction(a=0.0, b=1.0, sigma=0.25)
    theta, _ = tf.time([0.0, 0.5, 1.0])
    np.testing.assert_allclose(theta, [0.0, 1.0, 0.0])
    rising = TestFunction(a=0.0, b=1.0, sigma=0.25, rise_only=True)
    assert rising.time([1.0])[0][0] == 1.0


def test_invalid_parameters(grid):
    with pytest.raises(ValidationError):
        TestFunction(kind="ring")
    with pytest.raises(ValidationError):
        TestFunction(kind="localized")
    with pytest.raises(ValidationError):
        TestFunction(a=0.0, b=0.5, sigma=0.5)
    with pytest.raises(ValidationError):
        TestFunction(center=(3.0, 0.0, 0.0), radius=2.0).space(grid)


def test_window_family():
    family = window_test_functions(0.0, 0.5, [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)], radius=1.0)
    assert [tf.name for tf in family] == ["bump0", "bump1"]
    assert family[1].center == (1.0, 0.0, 0.0)
    assert family[0].sigma == 0.25
