"""Experiment configuration schema and validation."""
from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import voluptuous as vol

from .const import CONF_C_PICARD
from .const import CONF_CENTER
from .const import CONF_CENTERS
from .const import CONF_DATA
from .const import CONF_DELTA
from .const import CONF_DIAGNOSTICS
from .const import CONF_ENERGY_BUDGET
from .const import CONF_DIR
from .const import CONF_DT
from .const import CONF_EPSILON_LIST
from .const import CONF_EXTENSION
from .const import CONF_FORMATS
from .const import CONF_GRID
from .const import CONF_KIND
from .const import CONF_L
from .const import CONF_LEI_FLOOR
from .const import CONF_MAX_ITER
from .const import CONF_N
from .const import CONF_OUTPUT
from .const import CONF_PARAMS
from .const import CONF_PRESSURE
from .const import CONF_PROBES
from .const import CONF_R_LIST
from .const import CONF_RADIUS
from .const import CONF_SOLVER
from .const import CONF_SPLIT
from .const import CONF_T0_LIST
from .const import CONF_T_LIST
from .const import CONF_T_TOTAL
from .const import CONF_TAU
from .const import CONF_TEST_FUNCTIONS
from .const import CONF_THRESHOLD
from .const import CONF_TOL
from .const import CONF_TOL_PRESS
from .const import CONF_TOL_WEAK
from .const import CONF_WINDOW
from .const import DATA_KINDS
from .const import DEFAULT_C_PICARD
from .const import DEFAULT_DECAY_THRESHOLD
from .const import DEFAULT_ENERGY_BUDGET
from .const import DEFAULT_LEI_FLOOR
from .const import DEFAULT_MAX_ITER
from .const import DEFAULT_TOL
from .const import DEFAULT_TOL_PRESS
from .const import DEFAULT_TOL_WEAK
from .const import MIN_STEPS
from .const import OUTPUT_FORMATS
from .const import SPLIT_MODES
from .exceptions import ValidationError
from .lattice import Grid
from .lattice import check_region
from .lattice import is_resolvable
from .lattice import make_grid
from .pressure import check_tau

_LOGGER = logging.getLogger(__name__)

_positive = vol.All(vol.Coerce(float), vol.Range(min=0.0, min_included=False))
_fraction = vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0))
_vector = vol.All([vol.Coerce(float)], vol.Length(min=3, max=3))

GRID_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_N): vol.All(int, vol.Range(min=1)),
        vol.Required(CONF_L): _positive,
    }
)

DATA_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_KIND): vol.In(DATA_KINDS),
        vol.Optional(CONF_PARAMS, default={}): dict,
        vol.Optional(CONF_SPLIT, default=SPLIT_MODES[0]): vol.In(SPLIT_MODES),
    }
)

SOLVER_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_EPSILON_LIST): vol.All([_positive], vol.Length(min=1)),
        vol.Required(CONF_T_TOTAL): _positive,
        vol.Required(CONF_DT): _positive,
        vol.Optional(CONF_WINDOW): _positive,
        vol.Optional(CONF_TOL, default=DEFAULT_TOL): _positive,
        vol.Optional(CONF_MAX_ITER, default=DEFAULT_MAX_ITER): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_C_PICARD, default=DEFAULT_C_PICARD): _positive,
    }
)

PRESSURE_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_CENTERS, default=[[0.0, 0.0, 0.0]]): [_vector],
        vol.Optional(CONF_TAU, default=2.0): _positive,
        vol.Optional(CONF_TOL_PRESS, default=DEFAULT_TOL_PRESS): _positive,
    }
)

TEST_FUNCTION_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_CENTER): _vector,
        vol.Optional(CONF_RADIUS, default=1.0): _positive,
    }
)

DIAGNOSTICS_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_R_LIST, default=[]): [_positive],
        vol.Optional(CONF_T_LIST, default=[]): [_positive],
        vol.Optional(CONF_PROBES, default=[]): [_vector],
        vol.Optional(CONF_TEST_FUNCTIONS, default=[{CONF_CENTER: [0.0, 0.0, 0.0]}]): [
            TEST_FUNCTION_SCHEMA
        ],
        vol.Optional(CONF_T0_LIST, default=[]): [vol.Coerce(float)],
        vol.Optional(CONF_TOL_WEAK, default=DEFAULT_TOL_WEAK): _positive,
        vol.Optional(CONF_LEI_FLOOR, default=DEFAULT_LEI_FLOOR): _positive,
        vol.Optional(CONF_THRESHOLD, default=DEFAULT_DECAY_THRESHOLD): _fraction,
        vol.Optional(CONF_ENERGY_BUDGET, default=DEFAULT_ENERGY_BUDGET): _positive,
    }
)

EXTENSION_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_DELTA): _positive,
        vol.Required(CONF_RADIUS): _positive,
        vol.Required(CONF_WINDOW): _positive,
    }
)

OUTPUT_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_DIR): str,
        vol.Optional(CONF_FORMATS, default=list(OUTPUT_FORMATS)): [vol.In(OUTPUT_FORMATS)],
    }
)

CONFIG_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_GRID): GRID_SCHEMA,
        vol.Required(CONF_DATA): DATA_SCHEMA,
        vol.Required(CONF_SOLVER): SOLVER_SCHEMA,
        vol.Optional(CONF_PRESSURE, default={}): PRESSURE_SCHEMA,
        vol.Optional(CONF_DIAGNOSTICS, default={}): DIAGNOSTICS_SCHEMA,
        vol.Optional(CONF_EXTENSION): EXTENSION_SCHEMA,
        vol.Required(CONF_OUTPUT): OUTPUT_SCHEMA,
    },
    extra=vol.PREVENT_EXTRA,
)


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) <= 1e-9 * max(ratio, 1.0)


def _check_centers(grid: Grid, centers, radius: float, errors: dict[str, str], key: str) -> None:
    for center in centers:
        try:
            check_region(grid, center, radius)
        except ValidationError as err:
            errors[key] = str(err)
            return
        if not grid.is_node(center):
            errors[key] = f"center {center} is not a lattice node"
            return


def _cross_check(config: dict[str, Any]) -> dict[str, str]:
    """Return errors of constraints that span sections."""
    errors: dict[str, str] = {}
    grid_conf = config[CONF_GRID]
    try:
        grid = make_grid(grid_conf[CONF_N], grid_conf[CONF_L])
    except ValidationError as err:
        return {CONF_GRID: str(err)}

    solver = config[CONF_SOLVER]
    bad = [eps for eps in solver[CONF_EPSILON_LIST] if not is_resolvable(grid, eps)]
    if bad:
        errors[CONF_EPSILON_LIST] = f"epsilon {bad} must satisfy 2h = {2 * grid.h:g} <= eps < L"
    dt, T_total = solver[CONF_DT], solver[CONF_T_TOTAL]
    if dt > T_total / MIN_STEPS + 1e-12:
        errors[CONF_DT] = f"dt={dt:g} exceeds T_total/{MIN_STEPS}"
    elif not _is_multiple(T_total, dt):
        errors[CONF_T_TOTAL] = f"T_total={T_total:g} is not a multiple of dt={dt:g}"
    window = solver.get(CONF_WINDOW)
    if window is not None and not _is_multiple(window, 8 * dt):
        errors[CONF_WINDOW] = f"window={window:g} must be a multiple of 8 dt"

    pressure = config[CONF_PRESSURE]
    try:
        check_tau(grid, pressure[CONF_TAU])
    except ValidationError as err:
        errors[CONF_TAU] = str(err)
    else:
        _check_centers(grid, pressure[CONF_CENTERS], 1.5 * pressure[CONF_TAU], errors, CONF_CENTERS)

    diagnostics = config[CONF_DIAGNOSTICS]
    _check_centers(grid, diagnostics[CONF_PROBES], 1.0, errors, CONF_PROBES)
    for tf in diagnostics[CONF_TEST_FUNCTIONS]:
        try:
            check_region(grid, tf[CONF_CENTER], tf[CONF_RADIUS])
        except ValidationError as err:
            errors[CONF_TEST_FUNCTIONS] = str(err)
    if any(R > grid.L / 4 + 1e-12 for R in diagnostics[CONF_R_LIST]):
        errors[CONF_R_LIST] = f"R values must not exceed L/4 = {grid.L / 4:g}"
    times = list(diagnostics[CONF_T_LIST]) + list(diagnostics[CONF_T0_LIST])
    if any(t > T_total + 1e-12 or not _is_multiple(t, dt) for t in times if t > 0):
        errors[CONF_T_LIST] = "diagnostic times must be snapshot times within T_total"
    if any(t >= 1.0 for t in diagnostics[CONF_T_LIST]):
        errors[CONF_T_LIST] = "decay times must lie below 1"

    extension = config.get(CONF_EXTENSION)
    if extension is not None and not _is_multiple(extension[CONF_WINDOW], dt):
        errors[CONF_EXTENSION] = "extension window must be a multiple of dt"
    return errors


def validate_config(data: dict[str, Any]) -> tuple[dict[str, str], dict[str, Any] | None]:
    """Validate raw config data; return (errors, normalized config)."""
    try:
        config = CONFIG_SCHEMA(data)
    except vol.MultipleInvalid as err:
        return {str(e.path[0]) if e.path else "base": e.msg for e in err.errors}, None
    except vol.Invalid as err:
        return {"base": str(err)}, None

    errors = _cross_check(config)
    if errors:
        return errors, None
    return {}, config


def load_config(path: Path) -> dict[str, Any]:
    """Read and validate a JSON config; raise ValidationError listing every problem."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ValidationError(f"cannot read config {path}: {err}") from err

    errors, config = validate_config(data)
    if errors:
        message = "; ".join(f"{key}: {value}" for key, value in sorted(errors.items()))
        raise ValidationError(f"invalid config {path}: {message}")
    _LOGGER.debug(f"Loaded config {path}")
    return config


def config_hash(config: dict[str, Any]) -> str:
    """Return the sha256 of the canonical JSON form of a config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
