"""Tests for field files, trajectory directories and CSV tables."""
from __future__ import annotations

import json

import numpy as np
import pytest

from ulocflow.exceptions import ValidationError
from ulocflow.lattice import ScalarField
from ulocflow.lattice import TensorField
from ulocflow.lattice import Trajectory
from ulocflow.storage import read_field
from ulocflow.storage import read_trajectory
from ulocflow.storage import sha256_file
from ulocflow.storage import write_csv
from ulocflow.storage import write_field
from ulocflow.storage import write_trajectory


def test_field_file_layout(tmp_path, flow):
    path = tmp_path / "v.ulf"
    write_field(path, flow)
    raw = path.read_bytes()
    assert raw[:4] == b"ULF1"
    assert len(raw) == 32 + 3 * flow.grid.N**3 * 8
    back = read_field(path)
    assert back.grid == flow.grid
    np.testing.assert_array_equal(back.data, flow.data)


def test_tensor_field_file(tmp_path, grid):
    data = np.arange(9 * grid.N**3, dtype=float).reshape((3, 3) + grid.shape)
    path = tmp_path / "F.ulf"
    write_field(path, TensorField(grid, data, 0.5))
    back = read_field(path)
    assert isinstance(back, TensorField)
    assert back.time == 0.5


def test_read_field_rejects(tmp_path, grid):
    path = tmp_path / "bad.ulf"
    write_field(path, ScalarField(grid, np.zeros(grid.shape)))
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValidationError):
        read_field(path)
    path.write_bytes(raw[:-8])
    with pytest.raises(ValidationError):
        read_field(path)
    with pytest.raises(ValidationError):
        read_field(tmp_path / "missing.ulf")


def test_trajectory_directory(tmp_path, grid, flow):
    times = np.array([0.0, 0.125, 0.25])
    traj = Trajectory(grid, times, np.stack([flow.data * (1.0 + t) for t in times]), 1.0)
    p = Trajectory(grid, times, np.zeros((3,) + grid.shape))
    written = write_trajectory(tmp_path / "traj", traj, p)
    assert len(written) == 7
    index = json.loads((tmp_path / "traj" / "index.json").read_text())
    assert index["files"] == ["v_0000.ulf", "v_0001.ulf", "v_0002.ulf"]
    assert index["epsilon"] == 1.0
    v_back, p_back = read_trajectory(tmp_path / "traj")
    np.testing.assert_array_equal(v_back.data, traj.data)
    np.testing.assert_array_equal(v_back.times, times)
    assert v_back.epsilon == 1.0
    assert p_back is not None and p_back.components == ()


def test_trajectory_missing_snapshot(tmp_path, grid, flow):
    traj = Trajectory(grid, np.array([0.0, 0.5]), np.stack([flow.data, flow.data]))
    write_trajectory(tmp_path / "traj", traj)
    (tmp_path / "traj" / "v_0001.ulf").unlink()
    with pytest.raises(ValidationError):
        read_trajectory(tmp_path / "traj")


def test_trajectory_without_pressure(tmp_path, grid, flow):
    traj = Trajectory(grid, np.array([0.0]), flow.data[None])
    write_trajectory(tmp_path / "traj", traj)
    _, p = read_trajectory(tmp_path / "traj")
    assert p is None


def test_csv_digits_and_hash(tmp_path):
    path = write_csv(tmp_path / "t.csv", ("a", "b"), [[1.0 / 3.0, "x"], [np.float64(2.0), 3]], "abc")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_sha256=abc"
    assert lines[1] == "a,b"
    assert lines[2] == "0.33333333333333331,x"
    assert lines[3] == "2,3"
    assert len(sha256_file(path)) == 64
