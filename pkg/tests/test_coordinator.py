"""Tests for the stage runner and stored-solution verification."""
from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import base_config
from ulocflow.config_flow import validate_config
from ulocflow.const import FAIL
from ulocflow.const import FAILED_MARKER
from ulocflow.const import MANIFEST_FILE
from ulocflow.const import PASS
from ulocflow.coordinator import STAGES
from ulocflow.coordinator import ExperimentCoordinator
from ulocflow.coordinator import build_test_functions
from ulocflow.coordinator import contraction_window
from ulocflow.coordinator import verify_solution
from ulocflow.exceptions import StageFailed
from ulocflow.exceptions import ValidationError
from ulocflow.lattice import Trajectory
from ulocflow.lattice import parasitic_trajectory
from ulocflow.storage import write_trajectory


def validated(raw):
    errors, config = validate_config(raw)
    assert errors == {}
    return config


def test_contraction_window():
    assert contraction_window(1.0, 0.0, 1.0 / 64.0, 0.25, 1.0 / 64.0) == pytest.approx(0.25)
    assert contraction_window(1.0, 0.25, 1.0 / 128.0, 1.0, 1.0 / 64.0) == pytest.approx(0.25)
    with pytest.raises(ValidationError):
        contraction_window(1.0, 1.0, 1.0 / 64.0, 0.25, 1.0 / 64.0)


def test_build_test_functions():
    tfs = build_test_functions([{"center": [1.0, 0.0, 0.0], "radius": 2.0}, {"center": [0.0] * 3, "radius": 1.0}], 0.0, 0.5)
    assert [tf.name for tf in tfs] == ["tf0", "tf1"]
    assert tfs[0].center == (1.0, 0.0, 0.0)
    assert tfs[1].sigma == 0.25


def test_failed_stage_leaves_marker(tmp_path):
    raw = base_config(tmp_path)
    raw["data"]["params"]["radius"] = 3.0
    coordinator = ExperimentCoordinator(validated(raw))
    with pytest.raises(StageFailed) as excinfo:
        coordinator.run()
    assert excinfo.value.stage == "data"
    assert excinfo.value.exit_code == 2
    out = tmp_path / "out"
    assert (out / FAILED_MARKER).read_text().startswith("data:")
    manifest = json.loads((out / MANIFEST_FILE).read_text())
    assert manifest["status"] == "failed"
    assert manifest["failed_stage"] == "data"
    assert manifest["stages"] == []


@pytest.mark.slow
def test_zero_data_run(tmp_path):
    raw = base_config(tmp_path)
    (tmp_path / "out").mkdir()
    (tmp_path / "out" / FAILED_MARKER).write_text("stale\n")
    manifest = ExperimentCoordinator(validated(raw)).run()
    out = tmp_path / "out"
    assert not (out / FAILED_MARKER).exists()
    assert manifest["status"] == "ok"
    assert manifest["stages"] == [stage for stage in STAGES if stage != "extension"]
    assert manifest["summary"]["B"] == 0.0
    assert manifest["summary"]["window"] == pytest.approx(0.25)
    names = {entry["path"] for entry in manifest["files"]}
    for name in ("norms.csv", "solve.csv", "pressure.csv", "cx0.csv", "lei.csv", "decay.csv", "gradv.csv"):
        assert name in names
    first = (out / "lei.csv").read_text().splitlines()[0]
    assert first == f"# config_sha256={manifest['config_sha256']}"
    assert json.loads((out / MANIFEST_FILE).read_text())["status"] == "ok"


@pytest.mark.slow
def test_shear_run_replays_bit_for_bit(tmp_path):
    raw = base_config(tmp_path)
    raw["data"] = {"kind": "slow_oscillation_shear", "params": {"amplitude": 0.1}}
    config = validated(raw)
    out = tmp_path / "out"
    first = ExperimentCoordinator(config).run()
    assert first["status"] == "ok"
    artifacts = {entry["path"]: (out / entry["path"]).read_bytes() for entry in first["files"]}
    manifest_bytes = (out / MANIFEST_FILE).read_bytes()
    v0_row = (out / "norms.csv").read_text().splitlines()[2].split(",")
    assert v0_row[0] == "lq_uloc_v0"
    assert float(v0_row[4]) > 0.0

    second = ExperimentCoordinator(validated(raw)).run()
    assert [(e["path"], e["sha256"]) for e in second["files"]] == [(e["path"], e["sha256"]) for e in first["files"]]
    for path, content in artifacts.items():
        assert (out / path).read_bytes() == content
    assert (out / MANIFEST_FILE).read_bytes() == manifest_bytes


def test_output_dir_override(tmp_path):
    config = validated(base_config(tmp_path))
    coordinator = ExperimentCoordinator(config, tmp_path / "elsewhere")
    assert coordinator.output_dir == tmp_path / "elsewhere"
    assert coordinator.eps == 0.5
    assert coordinator.formats == {"csv"}


def write_solution(path, v, p=None):
    write_trajectory(path, v, p)
    return path


def test_verify_zero_solution(tmp_path, grid):
    times = np.linspace(0.0, 0.5, 5)
    v = Trajectory(grid, times, np.zeros((5, 3) + grid.shape))
    p = Trajectory(grid, times, np.zeros((5,) + grid.shape))
    report = verify_solution(write_solution(tmp_path / "zero", v, p), validated(base_config(tmp_path)))
    assert report.passed
    assert len(report.csv_rows()) == 5


def test_verify_parasitic_solution(tmp_path, grid):
    v, p = parasitic_trajectory(grid, np.linspace(0.0, 1.0, 33))
    report = verify_solution(write_solution(tmp_path / "parasitic", v, p), validated(base_config(tmp_path)))
    conditions = report.conditions
    assert conditions["weak_form"][0] == PASS
    assert conditions["energy_bound"][0] == PASS
    assert conditions["weak_continuity"][0] == PASS
    assert conditions["local_energy"][0] == PASS
    assert conditions["pressure_decomposition"][0] == FAIL
    assert not report.passed


def test_verify_growing_solution_fails_energy_bound(tmp_path, grid, flow):
    times = np.linspace(0.0, 0.5, 17)
    growth = 1e-4 / (0.505 - times)
    v = Trajectory(grid, times, growth[:, None, None, None, None] * flow.data[None])
    p = Trajectory(grid, times, np.zeros((len(times),) + grid.shape))
    report = verify_solution(write_solution(tmp_path / "growing", v, p), validated(base_config(tmp_path)))
    assert report.conditions["energy_bound"][0] == FAIL
    steady = Trajectory(grid, times, np.broadcast_to(growth[0] * flow.data, v.data.shape).copy())
    report = verify_solution(write_solution(tmp_path / "steady", steady, p), validated(base_config(tmp_path)))
    assert report.conditions["energy_bound"][0] == PASS


def test_verify_needs_pressure(tmp_path, grid):
    times = np.array([0.0, 0.5])
    v = Trajectory(grid, times, np.zeros((2, 3) + grid.shape))
    with pytest.raises(ValidationError):
        verify_solution(write_solution(tmp_path / "nop", v), validated(base_config(tmp_path)))
