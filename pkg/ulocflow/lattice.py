"""Periodic lattice, fields, spectral operators and initial data."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import cached_property
from functools import lru_cache
from typing import Any
from typing import ClassVar

import numpy as np
import scipy.fft

from .const import DATA_KINDS
from .const import ENV_THREADS
from .const import MAX_SPACING
from .const import MIN_HALF_LENGTH
from .const import MIN_POINTS
from .const import PROBE_SPACING
from .const import SHEAR_PROFILES
from .exceptions import ValidationError

_LOGGER = logging.getLogger(__name__)

_SPATIAL_AXES = (-3, -2, -1)


def fft_workers() -> int:
    """Return the FFT worker count, capped by ULOCFLOW_THREADS."""
    value = os.environ.get(ENV_THREADS)
    if not value:
        return -1
    try:
        workers = int(value)
    except ValueError as err:
        raise ValidationError(f"{ENV_THREADS} must be an integer, got {value!r}") from err
    if workers < 1:
        raise ValidationError(f"{ENV_THREADS} must be positive, got {workers}")
    return workers


@dataclass(frozen=True)
class Grid:
    """Periodic lattice over [-L, L)^3 with N points per axis."""

    N: int
    L: float

    @property
    def h(self) -> float:
        """Return the lattice spacing."""
        return 2.0 * self.L / self.N

    @property
    def cell_volume(self) -> float:
        """Return the volume of one lattice cell."""
        return self.h**3

    @property
    def shape(self) -> tuple[int, int, int]:
        """Return the spatial array shape."""
        return (self.N, self.N, self.N)

    @cached_property
    def axis(self) -> np.ndarray:
        """Return node coordinates along one axis."""
        return -self.L + self.h * np.arange(self.N)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return broadcastable node coordinates (x1, x2, x3)."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return broadcastable wavenumbers for the real transform layout."""
        k = 2.0 * np.pi * scipy.fft.fftfreq(self.N, d=self.h)
        kz = 2.0 * np.pi * scipy.fft.rfftfreq(self.N, d=self.h)
        return k[:, None, None], k[None, :, None], kz[None, None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        """Return |k|^2, used by the heat semigroup."""
        kx, ky, kz = self.wavenumbers
        return kx**2 + ky**2 + kz**2

    @cached_property
    def kd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return derivative wavenumbers with the Nyquist mode removed."""
        nyquist = np.pi / self.h
        return tuple(np.where(np.isclose(np.abs(k), nyquist), 0.0, k) for k in self.wavenumbers)

    @cached_property
    def kd2(self) -> np.ndarray:
        """Return |kd|^2."""
        kx, ky, kz = self.kd
        return kx**2 + ky**2 + kz**2

    @cached_property
    def inv_kd2(self) -> np.ndarray:
        """Return 1/|kd|^2 with zero where kd vanishes."""
        kd2 = self.kd2
        return np.where(kd2 == 0, 0.0, 1.0 / np.where(kd2 == 0, 1.0, kd2))

    def node_index(self, x0) -> tuple[int, int, int]:
        """Return the index of the node nearest to x0."""
        x0 = np.asarray(x0, dtype=float)
        idx = np.rint((x0 + self.L) / self.h).astype(int) % self.N
        return tuple(int(i) for i in idx)

    def is_node(self, x0) -> bool:
        """Return whether x0 coincides with a lattice node."""
        x0 = np.asarray(x0, dtype=float)
        offset = (x0 + self.L) / self.h
        return bool(np.all(np.abs(offset - np.rint(offset)) < 1e-9))


def make_grid(N: int, L: float, relaxed: bool = False) -> Grid:
    """Return a validated Grid.

    ``relaxed`` waives the minimum box size for small kernel-suite grids; the
    spacing bound always applies.
    """
    if not isinstance(N, (int, np.integer)) or N < MIN_POINTS or N & (N - 1):
        raise ValidationError(f"N must be a power of two >= {MIN_POINTS}, got {N}")
    if L <= 0:
        raise ValidationError(f"L must be positive, got {L}")
    if not relaxed and L < MIN_HALF_LENGTH:
        raise ValidationError(f"L must be >= {MIN_HALF_LENGTH}, got {L}")
    h = 2.0 * L / N
    if h > MAX_SPACING + 1e-12:
        raise ValidationError(f"spacing h={h:g} exceeds {MAX_SPACING} for N={N}, L={L}")
    _LOGGER.debug(f"Grid N={N} L={L} h={h}")
    return Grid(N=int(N), L=float(L))


@dataclass(frozen=True)
class Field:
    """Samples of a scalar, vector or tensor quantity on a Grid."""

    grid: Grid
    data: np.ndarray
    time: float = 0.0

    components: ClassVar[tuple[int, ...]] = ()

    def __post_init__(self) -> None:
        """Validate the sample array and freeze it."""
        data = np.asarray(self.data, dtype=np.float64)
        expected = self.components + self.grid.shape
        if data.shape != expected:
            raise ValidationError(
                f"{type(self).__name__} expects shape {expected}, got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise ValidationError(f"{type(self).__name__} has non-finite samples")
        view = data.view()
        view.flags.writeable = False
        object.__setattr__(self, "data", view)

    def __add__(self, other: Field) -> Field:
        return type(self)(self.grid, self.data + other.data, self.time)

    def __sub__(self, other: Field) -> Field:
        return type(self)(self.grid, self.data - other.data, self.time)

    def __mul__(self, scalar: float) -> Field:
        return type(self)(self.grid, self.data * scalar, self.time)

    __rmul__ = __mul__

    def magnitude(self) -> np.ndarray:
        """Return the pointwise Euclidean (Frobenius) magnitude."""
        if not self.components:
            return np.abs(self.data)
        axes = tuple(range(len(self.components)))
        return np.sqrt(np.sum(self.data**2, axis=axes))


class ScalarField(Field):
    """Scalar samples."""

    components = ()


class VectorField(Field):
    """Three-component samples."""

    components = (3,)


class TensorField(Field):
    """Nine-component samples, F[i, j]."""

    components = (3, 3)


_FIELD_TYPES = {(): ScalarField, (3,): VectorField, (3, 3): TensorField}


def field_type(components: tuple[int, ...]) -> type[Field]:
    """Return the Field class for a component shape."""
    try:
        return _FIELD_TYPES[tuple(components)]
    except KeyError as err:
        raise ValidationError(f"unsupported component shape {components}") from err


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped snapshots sharing one Grid.

    ``data`` has shape (nt, *components, N, N, N).
    """

    grid: Grid
    times: np.ndarray
    data: np.ndarray
    epsilon: float | None = None

    def __post_init__(self) -> None:
        """Validate times and snapshot shapes."""
        times = np.asarray(self.times, dtype=np.float64)
        data = np.asarray(self.data, dtype=np.float64)
        if times.ndim != 1 or len(times) == 0:
            raise ValidationError("trajectory needs at least one time")
        if times[0] < 0 or np.any(np.diff(times) <= 0):
            raise ValidationError("trajectory times must be nonnegative and increasing")
        if data.shape[0] != len(times) or data.shape[-3:] != self.grid.shape:
            raise ValidationError(
                f"trajectory data shape {data.shape} does not match "
                f"{len(times)} snapshots on N={self.grid.N}"
            )
        field_type(data.shape[1:-3])
        if not np.all(np.isfinite(data)):
            raise ValidationError("trajectory has non-finite samples")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_fields(cls, fields: list[Field], epsilon: float | None = None) -> Trajectory:
        """Stack fields into a trajectory using their times."""
        if not fields:
            raise ValidationError("no fields to stack")
        times = np.array([f.time for f in fields])
        data = np.stack([f.data for f in fields])
        return cls(fields[0].grid, times, data, epsilon)

    @property
    def components(self) -> tuple[int, ...]:
        """Return the component shape of the snapshots."""
        return tuple(self.data.shape[1:-3])

    def __len__(self) -> int:
        return len(self.times)

    def snapshot(self, n: int) -> Field:
        """Return snapshot n as a Field."""
        return field_type(self.components)(self.grid, self.data[n], float(self.times[n]))

    def index_of(self, t: float) -> int:
        """Return the index of snapshot time t."""
        hits = np.flatnonzero(np.abs(self.times - t) <= 1e-9 * (1.0 + abs(t)))
        if len(hits) == 0:
            raise ValidationError(f"time {t:g} is not a snapshot time")
        return int(hits[0])

    def window(self, t0: float, t: float) -> np.ndarray:
        """Return snapshot indices covering [t0, t]."""
        slack = 1e-9 * (1.0 + abs(t))
        if t0 < self.times[0] - slack or t > self.times[-1] + slack or t < t0:
            raise ValidationError(
                f"window [{t0:g}, {t:g}] outside trajectory "
                f"[{self.times[0]:g}, {self.times[-1]:g}]"
            )
        return np.flatnonzero((self.times >= t0 - slack) & (self.times <= t + slack))

    def with_data(self, data: np.ndarray, epsilon: float | None = None) -> Trajectory:
        """Return a trajectory on the same times with new samples."""
        return Trajectory(self.grid, self.times, data, epsilon)

    def __sub__(self, other: Trajectory) -> Trajectory:
        return self.with_data(self.data - other.data, self.epsilon)

    def __add__(self, other: Trajectory) -> Trajectory:
        return self.with_data(self.data + other.data, self.epsilon)


def rfft3(a: np.ndarray) -> np.ndarray:
    """Forward real transform over the three spatial axes."""
    return scipy.fft.rfftn(a, axes=_SPATIAL_AXES, workers=fft_workers())


def irfft3(a_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse real transform over the three spatial axes."""
    return scipy.fft.irfftn(a_hat, s=grid.shape, axes=_SPATIAL_AXES, workers=fft_workers())


def spectral_gradient(a: np.ndarray, grid: Grid) -> np.ndarray:
    """Return out[..., j, :, :, :] = d_j a[...]."""
    a_hat = rfft3(a)
    return np.stack([irfft3(1j * k * a_hat, grid) for k in grid.kd], axis=-4)


def spectral_divergence(a: np.ndarray, grid: Grid) -> np.ndarray:
    """Return the divergence, contracting the first index for tensors."""
    a_hat = rfft3(a)
    return irfft3(divergence_hat(a_hat, grid), grid)


def divergence_hat(a_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Return the divergence in Fourier space; (div F)_i = d_j F_ji."""
    return sum(1j * grid.kd[j] * a_hat[j] for j in range(3))


def spectral_laplacian(a: np.ndarray, grid: Grid) -> np.ndarray:
    """Return the spectral Laplacian."""
    return irfft3(-grid.k2 * rfft3(a), grid)


def project_hat(v_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply the Helmholtz projection in Fourier space."""
    kd_dot_v = sum(grid.kd[i] * v_hat[i] for i in range(3))
    return np.stack([v_hat[i] - grid.kd[i] * kd_dot_v * grid.inv_kd2 for i in range(3)])


def leray_project(v: VectorField) -> VectorField:
    """Return the divergence-free part of v."""
    return VectorField(v.grid, irfft3(project_hat(rfft3(v.data), v.grid), v.grid), v.time)


def gradient(f: ScalarField) -> VectorField:
    """Return the spectral gradient of a scalar field."""
    return VectorField(f.grid, spectral_gradient(f.data, f.grid), f.time)


def jacobian(v: VectorField) -> TensorField:
    """Return J[i, j] = d_j v_i."""
    return TensorField(v.grid, spectral_gradient(v.data, v.grid), v.time)


def divergence(v: VectorField) -> ScalarField:
    """Return the spectral divergence of a vector field."""
    return ScalarField(v.grid, spectral_divergence(v.data, v.grid), v.time)


def curl(v: VectorField) -> VectorField:
    """Return the spectral curl of a vector field."""
    grid = v.grid
    v_hat = rfft3(v.data)
    kx, ky, kz = grid.kd
    out = np.stack(
        [
            1j * (ky * v_hat[2] - kz * v_hat[1]),
            1j * (kz * v_hat[0] - kx * v_hat[2]),
            1j * (kx * v_hat[1] - ky * v_hat[0]),
        ]
    )
    return VectorField(grid, irfft3(out, grid), v.time)


def periodic_offsets(grid: Grid, x0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return minimal-image displacements x - x0 per axis (broadcastable)."""
    x0 = np.asarray(x0, dtype=float)
    period = 2.0 * grid.L
    return tuple(
        (c - x0[i] + grid.L) % period - grid.L for i, c in enumerate(grid.coords)
    )


def periodic_distance(grid: Grid, x0) -> np.ndarray:
    """Return the minimal-image distance |x - x0| at every node."""
    dx, dy, dz = periodic_offsets(grid, x0)
    return np.sqrt(dx**2 + dy**2 + dz**2)


def is_resolvable(grid: Grid, eps: float) -> bool:
    """Return whether a mollifier or cutoff of scale eps is resolved: 2h <= eps < L."""
    return 2.0 * grid.h - 1e-12 <= eps < grid.L


def check_region(grid: Grid, x0, r: float) -> None:
    """Raise unless the region of radius r around x0 stays off the seam."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (3,):
        raise ValidationError(f"center must be a 3-vector, got {x0.tolist()}")
    if np.any(np.abs(x0) + r > grid.L + 1e-12):
        raise ValidationError(
            f"region of radius {r:g} around {x0.tolist()} exits the box [-{grid.L}, {grid.L})"
        )


def ball_mask(grid: Grid, x0, r: float) -> np.ndarray:
    """Return the node indicator of the closed ball B(x0, r)."""
    return periodic_distance(grid, x0) <= r + 1e-12


def cube_weights(grid: Grid, x0, r: float) -> np.ndarray:
    """Return per-node cell-overlap weights of the cube Q_r(x0)."""
    h = grid.h
    weights = np.ones(grid.shape)
    for d in periodic_offsets(grid, x0):
        overlap = np.minimum(d + h / 2, r) - np.maximum(d - h / 2, -r)
        weights = weights * np.clip(overlap / h, 0.0, 1.0)
    return weights


def kernel_hat(table: np.ndarray) -> np.ndarray:
    """Return the transform of an origin-centered kernel table for convolution."""
    return rfft3(np.fft.ifftshift(table, axes=_SPATIAL_AXES))


@lru_cache(maxsize=16)
def ball_indicator_hat(grid: Grid, r: float) -> np.ndarray:
    """Return the transform of the origin-centered ball indicator."""
    return kernel_hat(ball_mask(grid, np.zeros(3), r).astype(np.float64))


def ball_sums(a: np.ndarray, grid: Grid, r: float = 1.0) -> np.ndarray:
    """Return the ball integral of a scalar array around every node."""
    sums = irfft3(rfft3(a) * ball_indicator_hat(grid, r), grid) * grid.cell_volume
    return np.maximum(sums, 0.0) if np.all(a >= 0) else sums


def ball_volume(grid: Grid, r: float = 1.0) -> float:
    """Return the node-quadrature volume of a ball of radius r."""
    return float(np.count_nonzero(ball_mask(grid, np.zeros(3), r))) * grid.cell_volume


def probe_axis_indices(grid: Grid, spacing: float = PROBE_SPACING) -> np.ndarray:
    """Return node indices of probe centers along one axis, including the origin."""
    stride = max(1, int(round(spacing / grid.h)))
    idx = np.arange(grid.N)
    return idx[(idx - grid.N // 2) % stride == 0]


def probe_centers(grid: Grid, spacing: float = PROBE_SPACING) -> np.ndarray:
    """Return probe center coordinates, shape (n, 3)."""
    a = grid.axis[probe_axis_indices(grid, spacing)]
    mesh = np.meshgrid(a, a, a, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def smooth_bump(s: np.ndarray) -> np.ndarray:
    """Return exp(1 - 1/(1 - s^2)) for |s| < 1, else 0."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s**2, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)


def _compact_bump(grid: Grid, params: dict[str, Any], amplitude: float) -> VectorField:
    radius = float(params.get("radius", 2.0))
    center = np.asarray(params.get("center", (0.0, 0.0, 0.0)), dtype=float)
    if radius > grid.L / 4 + 1e-12:
        raise ValidationError(f"bump radius {radius:g} exceeds L/4 = {grid.L / 4:g}")
    check_region(grid, center, radius)
    stream = np.zeros((3,) + grid.shape)
    stream[2] = amplitude * smooth_bump(periodic_distance(grid, center) / radius)
    return curl(VectorField(grid, stream))


def _shear_profile(grid: Grid, params: dict[str, Any]) -> np.ndarray:
    profile = params.get("profile", "tanh")
    s = grid.coords[1]
    if profile == "tanh":
        ell = float(params.get("scale", 1.5))
        kink = np.tanh(s / ell) - np.tanh((s - grid.L) / ell) - np.tanh((s + grid.L) / ell)
        return 0.5 * np.pi * kink
    if profile == "log":
        c = float(params.get("c", 0.7))
        return c * np.sqrt(np.log(2.0 + s**2))
    raise ValidationError(f"unknown shear profile {profile!r}, expected one of {SHEAR_PROFILES}")


def _x1_flow(grid: Grid, values: np.ndarray) -> VectorField:
    data = np.zeros((3,) + grid.shape)
    data[0] = np.broadcast_to(values, grid.shape)
    return VectorField(grid, data)


def _uloc_l3(v: VectorField) -> float:
    sums = ball_sums(v.magnitude() ** 3, v.grid)
    idx = probe_axis_indices(v.grid)
    return float(np.max(sums[np.ix_(idx, idx, idx)])) ** (1.0 / 3.0)


def gen_initial_data(
    kind: str, params: dict[str, Any], grid: Grid
) -> tuple[VectorField, VectorField, VectorField]:
    """Return (v0, w0, u0) with v0 = w0 + u0 divergence free.

    w0 is compactly supported within L/4; u0 carries the non-decaying part.
    """
    if kind not in DATA_KINDS:
        raise ValidationError(f"unknown data kind {kind!r}, expected one of {DATA_KINDS}")
    zero = VectorField(grid, np.zeros((3,) + grid.shape))
    amplitude = float(params.get("amplitude", 1.0))

    if kind == "compact_bump":
        w0, u0 = _compact_bump(grid, params, amplitude), zero
    elif kind == "constant":
        vector = np.asarray(params.get("vector", (1.0, 0.0, 0.0)), dtype=float)
        u0 = VectorField(grid, np.broadcast_to(vector[:, None, None, None], (3,) + grid.shape))
        w0 = zero
    elif kind == "slow_oscillation_shear":
        w0, u0 = zero, _x1_flow(grid, amplitude * np.sin(_shear_profile(grid, params)))
    elif kind == "mixed":
        w0 = _compact_bump(grid, params, float(params.get("bump_amplitude", 0.5)))
        u0 = _x1_flow(grid, amplitude * np.sin(_shear_profile(grid, params)))
    else:
        wavelength = float(params.get("wavelength", 2.0))
        modes = max(1, int(round(2.0 * grid.L / wavelength)))
        k = np.pi * modes / grid.L
        u0 = _x1_flow(grid, amplitude * np.sin(k * grid.coords[1]))
        w0 = zero

    bound = params.get("bound")
    if bound is not None:
        norm = _uloc_l3(u0)
        if norm > bound:
            raise ValidationError(f"u0 has L3_uloc norm {norm:.6g} above bound {bound:g}")

    v0 = w0 + u0
    _LOGGER.debug(f"Generated {kind} data, max|v0|={np.max(v0.magnitude()):.6g}")
    return v0, w0, u0


def oscillation(v: Field, x0, r: float, region: str = "ball") -> float:
    """Return the integral of |v - (v)_region| over a ball or cube."""
    grid = v.grid
    check_region(grid, x0, r)
    if region == "ball":
        weights = ball_mask(grid, x0, r).astype(np.float64)
    elif region == "cube":
        weights = cube_weights(grid, x0, r)
    else:
        raise ValidationError(f"region must be 'ball' or 'cube', got {region!r}")
    total = np.sum(weights)
    if total == 0:
        raise ValidationError(f"region of radius {r:g} contains no nodes")
    data = v.data if v.components else v.data[None]
    mean = np.sum(data * weights, axis=(-3, -2, -1), keepdims=True) / total
    deviation = np.sqrt(np.sum((data - mean) ** 2, axis=0))
    return float(np.sum(deviation * weights) * grid.cell_volume)


@dataclass(frozen=True)
class OscillationReport:
    """Ball and cube oscillation functionals at a list of centers."""

    centers: np.ndarray
    ball: np.ndarray
    cube: np.ndarray
    cube_inner: np.ndarray
    c_ball_cube: float
    c_cube_ball: float

    @property
    def ball_decreasing(self) -> bool:
        """Return whether the ball functional decreases along the centers."""
        return bool(np.all(np.diff(self.ball) < 0))

    @property
    def cube_decreasing(self) -> bool:
        """Return whether the cube functional decreases along the centers."""
        return bool(np.all(np.diff(self.cube) < 0))


def _max_ratio(num: np.ndarray, den: np.ndarray) -> float:
    scale = max(np.max(np.abs(num)), np.max(np.abs(den)), 1e-300)
    keep = den > 1e-12 * scale
    return float(np.max(num[keep] / den[keep])) if np.any(keep) else 0.0


def cube_ball_oscillation_equivalence(v: Field, centers, r: float = 1.0) -> OscillationReport:
    """Tabulate ball and cube oscillations and the fitted comparison constants."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    ball = np.array([oscillation(v, c, r, "ball") for c in centers])
    cube = np.array([oscillation(v, c, r, "cube") for c in centers])
    inner = np.array([oscillation(v, c, r / np.sqrt(3.0), "cube") for c in centers])
    return OscillationReport(
        centers=centers,
        ball=ball,
        cube=cube,
        cube_inner=inner,
        c_ball_cube=_max_ratio(ball, cube),
        c_cube_ball=_max_ratio(inner, ball),
    )


def parasitic_trajectory(
    grid: Grid, times, profile: str = "t2", direction=(1.0, 0.0, 0.0)
) -> tuple[Trajectory, Trajectory]:
    """Return v = f(t), p = -f'(t).x for f = t^2 e or sin(t) e."""
    times = np.asarray(times, dtype=float)
    e = np.asarray(direction, dtype=float)
    if profile == "t2":
        f, df = times**2, 2.0 * times
    elif profile == "sin":
        f, df = np.sin(times), np.cos(times)
    else:
        raise ValidationError(f"unknown parasitic profile {profile!r}")
    x1, x2, x3 = grid.coords
    e_dot_x = e[0] * x1 + e[1] * x2 + e[2] * x3
    v = np.broadcast_to(
        (f[:, None] * e[None, :])[:, :, None, None, None], (len(times), 3) + grid.shape
    )
    p = -df[:, None, None, None] * np.broadcast_to(e_dot_x, grid.shape)[None]
    return Trajectory(grid, times, np.array(v)), Trajectory(grid, times, p)
