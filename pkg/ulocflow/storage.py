"""Field files, trajectory directories and CSV tables."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import struct
from collections.abc import Iterable
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .const import CSV_DIGITS
from .const import FIELD_HEADER
from .const import FIELD_HEADER_SIZE
from .const import FIELD_MAGIC
from .const import INDEX_FILE
from .exceptions import ValidationError
from .lattice import Field
from .lattice import Grid
from .lattice import Trajectory
from .lattice import field_type

_LOGGER = logging.getLogger(__name__)

_NCOMP_SHAPES = {1: (), 3: (3,), 9: (3, 3)}


def write_field(path: Path, field: Field) -> None:
    """Write a field as a ULF1 file."""
    ncomp = int(np.prod(field.components, dtype=int))
    header = struct.pack(
        FIELD_HEADER, FIELD_MAGIC, field.grid.N, field.grid.L, field.time, ncomp, 0
    )
    payload = np.ascontiguousarray(field.data, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_field(path: Path) -> Field:
    """Read a ULF1 file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise ValidationError(f"cannot read field file {path}: {err}") from err
    if len(raw) < FIELD_HEADER_SIZE:
        raise ValidationError(f"{path} is too short for a field header")
    magic, n, half_length, time, ncomp, _ = struct.unpack(
        FIELD_HEADER, raw[:FIELD_HEADER_SIZE]
    )
    if magic != FIELD_MAGIC:
        raise ValidationError(f"{path} has bad magic {magic!r}")
    if ncomp not in _NCOMP_SHAPES:
        raise ValidationError(f"{path} has unsupported component count {ncomp}")
    components = _NCOMP_SHAPES[ncomp]
    expected = ncomp * n**3 * 8
    if len(raw) - FIELD_HEADER_SIZE != expected:
        raise ValidationError(
            f"{path} holds {len(raw) - FIELD_HEADER_SIZE} payload bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=FIELD_HEADER_SIZE)
    data = data.reshape(components + (n, n, n)).astype(np.float64)
    return field_type(components)(Grid(N=n, L=half_length), data, time)


def write_trajectory(
    directory: Path, traj: Trajectory, pressure: Trajectory | None = None
) -> list[Path]:
    """Write snapshots (and pressure) plus index.json; return written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    files = []
    pressure_files = []
    for n in range(len(traj)):
        name = f"v_{n:04d}.ulf"
        write_field(directory / name, traj.snapshot(n))
        files.append(name)
        written.append(directory / name)
        if pressure is not None:
            pname = f"p_{n:04d}.ulf"
            write_field(directory / pname, pressure.snapshot(n))
            pressure_files.append(pname)
            written.append(directory / pname)
    index = {
        "times": [float(t) for t in traj.times],
        "files": files,
        "pressure_files": pressure_files,
        "epsilon": traj.epsilon,
    }
    (directory / INDEX_FILE).write_text(json.dumps(index, indent=2, sort_keys=True))
    written.append(directory / INDEX_FILE)
    _LOGGER.info(f"Wrote {len(traj)} snapshots to {directory}")
    return written


def read_trajectory(directory: Path) -> tuple[Trajectory, Trajectory | None]:
    """Read a trajectory directory; return (velocity, pressure or None)."""
    directory = Path(directory)
    index_path = directory / INDEX_FILE
    try:
        index = json.loads(index_path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ValidationError(f"cannot read {index_path}: {err}") from err

    times = index.get("times")
    files = index.get("files")
    if not isinstance(times, list) or not isinstance(files, list) or len(times) != len(files):
        raise ValidationError(f"{index_path} must list one file per time")
    listed = files + index.get("pressure_files", [])
    missing = [name for name in listed if not (directory / name).exists()]
    if missing:
        raise ValidationError(f"{directory} is missing snapshots: {', '.join(missing)}")

    fields = [read_field(directory / name) for name in files]
    for field, t in zip(fields, times):
        if abs(field.time - t) > 1e-12 * (1.0 + abs(t)):
            raise ValidationError(f"snapshot time {field.time} does not match index time {t}")
    epsilon = index.get("epsilon")
    velocity = Trajectory.from_fields(fields, epsilon)

    pressure = None
    pressure_files = index.get("pressure_files") or []
    if pressure_files:
        if len(pressure_files) != len(files):
            raise ValidationError(
                f"{index_path} lists {len(pressure_files)} pressure files for {len(files)} times"
            )
        pressure = Trajectory.from_fields([read_field(directory / name) for name in pressure_files])
    return velocity, pressure


def format_value(value) -> str:
    """Format a CSV cell; floats keep 17 significant digits."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{CSV_DIGITS}g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(format_value(v) for v in value)
    return str(value)


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    config_hash: str | None = None,
) -> Path:
    """Write a CSV table, prefixed by the config hash comment when given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        if config_hash:
            handle.write(f"# config_sha256={config_hash}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def sha256_file(path: Path) -> str:
    """Return the sha256 hex digest of a file."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
