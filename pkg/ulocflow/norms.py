"""Uniformly-local norms, cutoffs and mollifiers."""
from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from functools import lru_cache
from typing import Any

import numpy as np
import scipy.integrate
import scipy.ndimage

from .const import DEFAULT_DECAY_THRESHOLD
from .const import DEFAULT_ENERGY_BUDGET
from .const import FAIL
from .const import PASS
from .const import PROBE_SPACING
from .exceptions import ValidationError
from .lattice import Field
from .lattice import Grid
from .lattice import Trajectory
from .lattice import ball_mask
from .lattice import ball_sums
from .lattice import ball_volume
from .lattice import irfft3
from .lattice import is_resolvable
from .lattice import kernel_hat
from .lattice import periodic_distance
from .lattice import periodic_offsets
from .lattice import probe_axis_indices
from .lattice import rfft3
from .lattice import smooth_bump
from .lattice import spectral_gradient

_LOGGER = logging.getLogger(__name__)

UNIT_BALL_VOLUME = 4.0 * np.pi / 3.0


def _quintic(s: np.ndarray) -> np.ndarray:
    return 1.0 - 10.0 * s**3 + 15.0 * s**4 - 6.0 * s**5


def _quintic_d1(s: np.ndarray) -> np.ndarray:
    return -30.0 * s**2 + 60.0 * s**3 - 30.0 * s**4


def _quintic_d2(s: np.ndarray) -> np.ndarray:
    return -60.0 * s + 180.0 * s**2 - 120.0 * s**3


@dataclass(frozen=True)
class CutoffSpec:
    """The radial plateau cutoff and the cutoffs built from it.

    Phi(r) = 1 for r <= inner, a C^2 quintic ramp on (inner, outer), 0 beyond.
    """

    inner: float = 1.0
    outer: float = 1.5

    def _ramp(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        width = self.outer - self.inner
        s = np.clip((np.asarray(r, dtype=float) - self.inner) / width, 0.0, 1.0)
        inside = (r > self.inner) & (r < self.outer)
        return s, inside, 1.0 / width

    def profile(self, r: np.ndarray) -> np.ndarray:
        """Return Phi(r)."""
        s, _, _ = self._ramp(r)
        return _quintic(s)

    def profile_d1(self, r: np.ndarray) -> np.ndarray:
        """Return Phi'(r)."""
        s, inside, scale = self._ramp(r)
        return np.where(inside, scale * _quintic_d1(s), 0.0)

    def profile_d2(self, r: np.ndarray) -> np.ndarray:
        """Return Phi''(r)."""
        s, inside, scale = self._ramp(r)
        return np.where(inside, scale**2 * _quintic_d2(s), 0.0)

    def field(self, grid: Grid, x0=(0.0, 0.0, 0.0), scale: float = 1.0) -> np.ndarray:
        """Return Phi(|x - x0| / scale) at every node."""
        return self.profile(periodic_distance(grid, x0) / scale)

    def derivatives(
        self, grid: Grid, x0=(0.0, 0.0, 0.0), scale: float = 1.0
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (value, gradient, laplacian) of Phi(|x - x0| / scale)."""
        offsets = periodic_offsets(grid, x0)
        r = np.sqrt(sum(d**2 for d in offsets))
        rho = r / scale
        d1 = self.profile_d1(rho) / scale
        d2 = self.profile_d2(rho) / scale**2
        # d1 vanishes on the plateau, which contains r = 0.
        inv_r = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
        gradient = np.stack([np.broadcast_to(d1 * d * inv_r, grid.shape) for d in offsets])
        laplacian = d2 + 2.0 * d1 * inv_r
        return self.profile(rho), gradient, laplacian

    def phi_eps(self, grid: Grid, eps: float) -> np.ndarray:
        """Return Phi_eps(x) = Phi(eps x)."""
        return self.field(grid, scale=1.0 / eps)

    def chi(self, grid: Grid, R: float, x0=(0.0, 0.0, 0.0)) -> np.ndarray:
        """Return chi_R(x) = 1 - Phi((x - x0) / R)."""
        return 1.0 - self.field(grid, x0, scale=R)


CUTOFF = CutoffSpec()


@lru_cache(maxsize=16)
def mollifier_hat(grid: Grid, eps: float) -> np.ndarray:
    """Return the transform of eta_eps, renormalized to unit node sum."""
    if not is_resolvable(grid, eps):
        raise ValidationError(
            f"mollifier scale eps={eps:g} is unresolvable: need {2 * grid.h:g} <= eps < {grid.L:g}"
        )
    table = smooth_bump(periodic_distance(grid, np.zeros(3)) / eps)
    table /= np.sum(table)
    return kernel_hat(table)


def mollify_array(data: np.ndarray, grid: Grid, eps: float) -> np.ndarray:
    """Return J_eps applied to every component of a sample array."""
    return irfft3(rfft3(data) * mollifier_hat(grid, eps), grid)


def mollify(f: Field, eps: float) -> Field:
    """Return J_eps f."""
    return type(f)(f.grid, mollify_array(f.data, f.grid, eps), f.time)


@dataclass
class NormReport:
    """One evaluated norm and the center that achieves it."""

    name: str
    value: float
    witness_center: tuple[float, float, float] | None
    stride: float
    params: dict[str, Any] = dataclass_field(default_factory=dict)
    components: dict[str, float] = dataclass_field(default_factory=dict)
    volume_error: float = 0.0
    t0: float | None = None
    t: float | None = None

    def csv_row(self) -> list:
        """Return (norm_name, q_or_s_p, t0, t, value, wx, wy, wz)."""
        order = " ".join(f"{key}={value:g}" for key, value in sorted(self.params.items()))
        witness = self.witness_center or (float("nan"),) * 3
        return [
            self.name,
            order,
            self.t0 if self.t0 is not None else "",
            self.t if self.t is not None else "",
            self.value,
            *witness,
        ]


NORM_CSV_HEADER = ("norm_name", "q_or_s_p", "t0", "t", "value", "wx", "wy", "wz")


@lru_cache(maxsize=16)
def ball_footprint(grid: Grid, r: float = 1.0) -> np.ndarray:
    """Return the boolean node stencil of a ball of radius r."""
    m = int(np.floor(r / grid.h + 1e-9))
    offsets = np.arange(-m, m + 1) * grid.h
    dx, dy, dz = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    return dx**2 + dy**2 + dz**2 <= r**2 + 1e-12


def ball_norm_table(magnitude: np.ndarray, grid: Grid, q: float, r: float = 1.0) -> np.ndarray:
    """Return ||f||_{L^q(B(x, r))} for every node x, given |f| samples.

    Balls that contain no nonzero sample get exactly 0.
    """
    if q < 1:
        raise ValidationError(f"exponent must be >= 1, got {q:g}")
    footprint = ball_footprint(grid, r)
    if np.isinf(q):
        return scipy.ndimage.maximum_filter(magnitude, footprint=footprint, mode="wrap")
    support = scipy.ndimage.maximum_filter(magnitude > 0, footprint=footprint, mode="wrap")
    sums = ball_sums(magnitude**q, grid, r)
    return np.where(support, sums, 0.0) ** (1.0 / q)


def _probe_view(table: np.ndarray, grid: Grid, stride: float) -> tuple[np.ndarray, np.ndarray]:
    idx = probe_axis_indices(grid, stride)
    return table[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]], idx


def _witness(grid: Grid, idx: np.ndarray, flat: int, shape) -> tuple[float, float, float]:
    i, j, k = np.unravel_index(flat, shape)
    return tuple(float(grid.axis[idx[n]]) for n in (i, j, k))


def _volume_error(grid: Grid) -> float:
    return ball_volume(grid, 1.0) - UNIT_BALL_VOLUME


def lq_uloc(f: Field, q: float, stride: float = PROBE_SPACING) -> NormReport:
    """Return the L^q_uloc norm of f over a probe lattice of the given stride."""
    grid = f.grid
    table, idx = _probe_view(ball_norm_table(f.magnitude(), grid, q), grid, stride)
    flat = int(np.argmax(table))
    return NormReport(
        name="lq_uloc",
        value=float(table.ravel()[flat]),
        witness_center=_witness(grid, idx, flat, table.shape),
        stride=stride,
        params={"q": q},
        volume_error=_volume_error(grid),
        t0=f.time,
        t=f.time,
    )


def _time_norm(values: np.ndarray, times: np.ndarray, s: float) -> np.ndarray:
    """Return the L^s norm in time along axis 0 (trapezoid rule)."""
    if np.isinf(s):
        return np.max(values, axis=0)
    if len(times) < 2:
        return np.zeros(values.shape[1:])
    return scipy.integrate.trapezoid(values**s, times, axis=0) ** (1.0 / s)


def snapshot_magnitude(traj: Trajectory, n: int, gradient: bool = False) -> np.ndarray:
    """Return |u(t_n)|, or the Frobenius norm of its Jacobian."""
    data = traj.data[n]
    if gradient:
        data = spectral_gradient(data, traj.grid)
    if data.ndim == 3:
        return np.abs(data)
    axes = tuple(range(data.ndim - 3))
    return np.sqrt(np.sum(data**2, axis=axes))


def _usp_table(
    traj: Trajectory,
    s: float,
    p: float,
    t0: float,
    t: float,
    stride: float,
    gradient: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Return the per-probe U^{s,p} values and the probe indices."""
    if s < 1 or p < 1:
        raise ValidationError(f"exponents must be >= 1, got s={s:g}, p={p:g}")
    window = traj.window(t0, t)
    tables = []
    for n in window:
        mag = snapshot_magnitude(traj, n, gradient)
        table, idx = _probe_view(ball_norm_table(mag, traj.grid, p), traj.grid, stride)
        tables.append(table)
    return _time_norm(np.stack(tables), traj.times[window], s), idx


def usp_norm(
    traj: Trajectory, s: float, p: float, t0: float, t: float, stride: float = PROBE_SPACING
) -> NormReport:
    """Return the U^{s,p}(t0, t) norm: sup over centers of L^s_t L^p_x(B_1)."""
    table, idx = _usp_table(traj, s, p, t0, t, stride)
    flat = int(np.argmax(table))
    return NormReport(
        name="usp",
        value=float(table.ravel()[flat]),
        witness_center=_witness(traj.grid, idx, flat, table.shape),
        stride=stride,
        params={"s": s, "p": p},
        volume_error=_volume_error(traj.grid),
        t0=t0,
        t=t,
    )


def energy_norm(
    traj: Trajectory, t0: float, t: float, stride: float = PROBE_SPACING
) -> NormReport:
    """Return ||u||_{U^{inf,2}} + ||grad u||_{U^{2,2}} on (t0, t)."""
    grid = traj.grid
    sup_part, idx = _usp_table(traj, np.inf, 2.0, t0, t, stride)
    grad_part, _ = _usp_table(traj, 2.0, 2.0, t0, t, stride, gradient=True)
    sup_value = float(np.max(sup_part))
    grad_value = float(np.max(grad_part))
    flat = int(np.argmax(sup_part + grad_part))
    return NormReport(
        name="energy",
        value=sup_value + grad_value,
        witness_center=_witness(grid, idx, flat, sup_part.shape),
        stride=stride,
        params={"s": np.inf, "p": 2.0},
        components={"u_inf_2": sup_value, "grad_u_2_2": grad_value},
        volume_error=_volume_error(grid),
        t0=t0,
        t=t,
    )


def energy_budget(
    traj: Trajectory,
    flux: Callable[[int], np.ndarray],
    t0: float,
    t: float,
    factor: float = DEFAULT_ENERGY_BUDGET,
    stride: float = PROBE_SPACING,
) -> float:
    """Return factor ((1 + T^{1/2}) ||u(t0)||_{L^2_uloc} + (1 + T) ||F||_{U^{2,2}}), T = t - t0.

    ``flux(n)`` is the tensor u (x) u + p I at sample n; the mild form bounds the
    energy norm of a solution by its data and this flux.
    """
    grid = traj.grid
    window = traj.window(t0, t)
    tables = []
    for n in window:
        magnitude = np.sqrt(np.sum(flux(n) ** 2, axis=(0, 1)))
        table, _ = _probe_view(ball_norm_table(magnitude, grid, 2.0), grid, stride)
        tables.append(table)
    flux_norm = float(np.max(_time_norm(np.stack(tables), traj.times[window], 2.0)))
    data_norm = lq_uloc(traj.snapshot(int(window[0])), 2.0, stride).value
    T = t - t0
    budget = factor * ((1.0 + np.sqrt(T)) * data_norm + (1.0 + T) * flux_norm)
    _LOGGER.debug(f"Energy budget on ({t0:g}, {t:g}): data {data_norm:.4g}, flux {flux_norm:.4g}, budget {budget:.4g}")
    return float(budget)


def ls_lp_uloc_norm(
    traj: Trajectory, s: float, p: float, t0: float, t: float, stride: float = PROBE_SPACING
) -> NormReport:
    """Return ||u||_{L^s(t0, t; L^p_uloc)}, the upper side of U^{s,p}."""
    window = traj.window(t0, t)
    sups = []
    witnesses = []
    for n in window:
        mag = snapshot_magnitude(traj, n)
        table, idx = _probe_view(ball_norm_table(mag, traj.grid, p), traj.grid, stride)
        flat = int(np.argmax(table))
        sups.append(float(table.ravel()[flat]))
        witnesses.append(_witness(traj.grid, idx, flat, table.shape))
    sups = np.asarray(sups)
    value = float(_time_norm(sups, traj.times[window], s))
    return NormReport(
        name="ls_lp_uloc",
        value=value,
        witness_center=witnesses[int(np.argmax(sups))],
        stride=stride,
        params={"s": s, "p": p},
        volume_error=_volume_error(traj.grid),
        t0=t0,
        t=t,
    )


@dataclass(frozen=True)
class TailProfile:
    """Sup of unit-ball norms over centers with |x0| >= R."""

    R: np.ndarray
    values: np.ndarray
    threshold: float

    @property
    def decreasing(self) -> bool:
        """Return whether the profile is nonincreasing in R."""
        return bool(np.all(np.diff(self.values) <= 1e-12 * max(self.values[0], 1e-300)))

    @property
    def verdict(self) -> str:
        """Return PASS when the profile decays below threshold times its first value."""
        first = self.values[0]
        if first == 0:
            return PASS
        small = self.values[-1] <= self.threshold * first
        return PASS if self.decreasing and small else FAIL


def tail_profile(
    f: Field,
    q: float,
    R_list,
    threshold: float = DEFAULT_DECAY_THRESHOLD,
    stride: float = PROBE_SPACING,
) -> TailProfile:
    """Return the E^q tail profile of f."""
    grid = f.grid
    R = np.asarray(R_list, dtype=float)
    if len(R) == 0 or np.any(np.diff(R) <= 0):
        raise ValidationError("R_list must be nonempty and increasing")
    if R[-1] > grid.L / 2 + 1e-12:
        raise ValidationError(f"tail radius {R[-1]:g} exceeds L/2 = {grid.L / 2:g}")
    table, idx = _probe_view(ball_norm_table(f.magnitude(), grid, q), grid, stride)
    a = grid.axis[idx]
    radius = np.sqrt(a[:, None, None] ** 2 + a[None, :, None] ** 2 + a[None, None, :] ** 2)
    values = np.array([np.max(table[radius >= r - 1e-12]) for r in R])
    return TailProfile(R=R, values=values, threshold=threshold)


@dataclass(frozen=True)
class UspCounterexample:
    """U^{s,p} value and L^s L^p_uloc partial sums of the dyadic ball family."""

    usp_value: float
    partial_sums: np.ndarray
    tail: float
    c_p: float

    @property
    def total(self) -> float:
        """Return the full time integral of the s-th power of the uloc norm."""
        last = self.partial_sums[-1] if len(self.partial_sums) else 0.0
        return float(last + self.tail)


def counterexample_centers(grid: Grid) -> np.ndarray:
    """Return centers of disjoint unit balls, spaced 4 apart, in sweep order."""
    a = np.arange(-grid.L + 2.0, grid.L - 1.0, 4.0)
    mesh = np.meshgrid(a, a, a, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def usp_counterexample(
    s: float, p: float, t0: float, t: float, K: int, grid: Grid
) -> UspCounterexample:
    """Evaluate u = 2^{k/s} on B_1(x_k) x (t0, t0 + 2^-k), k = 1..K.

    The U^{s,p} value stays bounded in K while each dyadic slab adds c_p^{s/p}/2 to the
    L^s L^p_uloc integral.
    """
    if not 1 <= s < np.inf or p < 1:
        raise ValidationError(f"need 1 <= s < inf and p >= 1, got s={s:g}, p={p:g}")
    centers = counterexample_centers(grid)
    if K < 1 or K > len(centers):
        raise ValidationError(f"K={K} disjoint unit balls do not fit in the box (max {len(centers)})")
    if t0 + 0.5 > t + 1e-12:
        raise ValidationError(f"window [{t0:g}, {t:g}] is shorter than 1/2")
    centers = centers[:K]
    if not all(grid.is_node(c) for c in centers):
        raise ValidationError("ball centers must be lattice nodes")

    masks = np.stack([ball_mask(grid, c, 1.0) for c in centers]).astype(np.float64)
    c_p = float(ball_volume(grid, 1.0))
    heights = 2.0 ** (np.arange(1, K + 1) / s)
    # Slab j = (t0 + 2^-(j+1), t0 + 2^-j) carries balls 1..j; the tail (t0, t0 + 2^-K) all.
    lengths = np.array([2.0 ** -(j + 1) for j in range(1, K)] + [2.0**-K])

    overlap = np.stack([ball_sums(m, grid, 1.0) for m in masks])
    integral = np.zeros(grid.shape)
    for j, length in enumerate(lengths, start=1):
        local_p = np.tensordot(heights[:j] ** p, overlap[:j], axes=1)
        integral += length * np.maximum(local_p, 0.0) ** (s / p)
    usp_value = float(np.max(integral)) ** (1.0 / s)

    slab_values = []
    for j, length in enumerate(lengths, start=1):
        u = np.tensordot(heights[:j], masks[:j], axes=1)
        uloc = float(np.max(ball_norm_table(u, grid, p)))
        slab_values.append(length * uloc**s)
    partial_sums = np.cumsum(slab_values[:-1])
    _LOGGER.debug(f"Counterexample K={K}: usp={usp_value:.6g}, c_p={c_p:.6g}")
    return UspCounterexample(
        usp_value=usp_value,
        partial_sums=partial_sums,
        tail=float(slab_values[-1]),
        c_p=c_p,
    )
