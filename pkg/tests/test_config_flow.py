"""Tests for experiment configuration validation."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from conftest import base_config
from ulocflow.config_flow import config_hash
from ulocflow.config_flow import load_config
from ulocflow.config_flow import validate_config
from ulocflow.const import DEFAULT_TOL
from ulocflow.const import OUTPUT_FORMATS
from ulocflow.exceptions import ValidationError


def test_base_config_is_valid(tmp_path):
    errors, config = validate_config(base_config(tmp_path))
    assert errors == {}
    assert config["solver"]["tol"] == DEFAULT_TOL
    assert config["pressure"]["tau"] == 2.0
    assert config["data"]["split"] == "generator"


def test_defaults_fill_optional_sections(tmp_path):
    raw = base_config(tmp_path)
    del raw["pressure"], raw["diagnostics"]
    raw["output"] = {"dir": str(tmp_path)}
    errors, config = validate_config(raw)
    assert errors == {}
    assert config["pressure"]["centers"] == [[0.0, 0.0, 0.0]]
    assert config["diagnostics"]["test_functions"] == [{"center": [0.0, 0.0, 0.0], "radius": 1.0}]
    assert config["output"]["formats"] == list(OUTPUT_FORMATS)


@pytest.mark.parametrize(
    "section, key, value, error_key",
    [
        ("data", "kind", "vortex_ring", "data"),
        ("grid", "N", 48, "grid"),
        ("grid", "L", 4.0, "grid"),
        ("solver", "epsilon_list", [0.25], "epsilon_list"),
        ("solver", "dt", 0.1, "dt"),
        ("solver", "T_total", 0.26, "T_total"),
        ("solver", "window", 0.1, "window"),
        ("pressure", "tau", 3.0, "tau"),
        ("pressure", "centers", [[0.1, 0.0, 0.0]], "centers"),
        ("pressure", "centers", [[6.0, 0.0, 0.0]], "centers"),
        ("diagnostics", "probes", [[7.5, 0.0, 0.0]], "probes"),
        ("diagnostics", "test_functions", [{"center": [0.0, 0.0, 0.0], "radius": 8.5}], "test_functions"),
        ("diagnostics", "R_list", [3.0], "R_list"),
        ("diagnostics", "t_list", [0.3], "t_list"),
        ("diagnostics", "threshold", 1.5, "diagnostics"),
        ("output", "formats", ["hdf5"], "output"),
    ],
)
def test_invalid_values(tmp_path, section, key, value, error_key):
    raw = base_config(tmp_path)
    raw[section][key] = value
    errors, config = validate_config(raw)
    assert config is None
    assert error_key in errors


def test_extra_sections_rejected(tmp_path):
    raw = base_config(tmp_path)
    raw["plots"] = {}
    errors, _ = validate_config(raw)
    assert "plots" in errors


def test_extension_window_checked(tmp_path):
    raw = base_config(tmp_path)
    raw["extension"] = {"delta": 0.5, "radius": 1.0, "window": 0.1}
    errors, _ = validate_config(raw)
    assert "extension" in errors
    raw["extension"]["window"] = 0.125
    assert validate_config(raw)[0] == {}


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(base_config(tmp_path)))
    assert load_config(path)["grid"]["N"] == 64

    raw = base_config(tmp_path)
    raw["solver"]["dt"] = 0.1
    raw["diagnostics"]["R_list"] = [3.0]
    path.write_text(json.dumps(raw))
    with pytest.raises(ValidationError, match="R_list.*dt|dt.*R_list"):
        load_config(path)

    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_config(path)
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.json")


def test_config_hash(tmp_path):
    config = validate_config(base_config(tmp_path))[1]
    again = validate_config(base_config(tmp_path))[1]
    assert config_hash(config) == config_hash(again)
    assert len(config_hash(config)) == 64
    again["solver"]["dt"] = np.float64(again["solver"]["dt"])
    assert config_hash(config) == config_hash(again)
    again["solver"]["tol"] = 1e-6
    assert config_hash(config) != config_hash(again)


@pytest.mark.parametrize("name", ["reference.json", "zero.json"])
def test_shipped_configs_load(name):
    config = load_config(Path(__file__).parent.parent / "config" / name)
    assert config["grid"]["L"] == 8.0
