"""Local energy balances, decay monitors and verification probes."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field as dataclass_field

import numpy as np
import scipy.integrate

from .const import DEFAULT_DECAY_THRESHOLD
from .const import DEFAULT_LEI_FLOOR
from .const import FAIL
from .const import LEI_RESIDUAL_FACTOR
from .const import PASS
from .const import T_TWENTIETH_SLOPE
from .exceptions import ValidationError
from .kernels import heat_apply_array
from .lattice import Grid
from .lattice import Trajectory
from .lattice import VectorField
from .lattice import ball_mask
from .lattice import check_region
from .lattice import spectral_gradient
from .localization import TestFunction
from .norms import CUTOFF
from .norms import lq_uloc
from .pressure import EVALUATION_RADIUS
from .pressure import PressureReport
from .solver import nonlinearity_array

_LOGGER = logging.getLogger(__name__)

LEI_CSV_HEADER = ("t", "tf_id", "lhs", "rhs", "slack", "budget")
DECAY_CSV_HEADER = ("t", "R", "m", "bound", "C0")
GRADV_CSV_HEADER = ("probe", "value")
EP_CSV_HEADER = ("probe", "linf_l2", "l3", "grad_l2", "pcheck_l32", "verdict")

_LHS_TERMS = ("energy", "dissipation")
_RHS_TERMS = ("initial", "heat", "transport", "pressure")


def lei_budget(residual_rel: float, terms, floor: float = DEFAULT_LEI_FLOOR) -> float:
    """Return max(5 residual, floor) times the sum of term magnitudes."""
    scale = float(sum(abs(value) for value in terms))
    return max(LEI_RESIDUAL_FACTOR * residual_rel, floor) * scale


@dataclass
class LEIReport:
    """Itemized local energy balance over [t0, t] for one test function."""

    tf_id: str
    t0: float
    t: float
    items: dict[str, float]
    budget: float
    equality: bool

    @property
    def lhs(self) -> float:
        """Return energy at t plus dissipation."""
        return sum(self.items[key] for key in _LHS_TERMS)

    @property
    def rhs(self) -> float:
        """Return the initial energy plus every flux and pressure term."""
        return sum(self.items[key] for key in _RHS_TERMS)

    @property
    def slack(self) -> float:
        """Return rhs - lhs."""
        return self.rhs - self.lhs

    @property
    def verdict(self) -> str:
        """Return PASS when the balance holds within budget."""
        if self.equality:
            return PASS if abs(self.slack) <= self.budget else FAIL
        return PASS if self.slack >= -self.budget else FAIL

    def csv_row(self) -> list:
        """Return (t, tf_id, lhs, rhs, slack, budget)."""
        return [self.t, self.tf_id, self.lhs, self.rhs, self.slack, self.budget]


def _energy_balance(
    u_traj: Trajectory,
    v_traj: Trajectory,
    p_traj: Trajectory,
    tf: TestFunction,
    t0: float,
    t: float,
    eps: float | None,
    residual_rel: float,
    floor: float,
) -> LEIReport:
    """Balance for u tested against 2 u phi, with flux N(v) and pressure p."""
    grid = u_traj.grid
    if v_traj.grid != grid or p_traj.grid != grid or len(p_traj) != len(u_traj):
        raise ValidationError("trajectories for the energy balance do not match")
    i0, i1 = u_traj.index_of(t0), u_traj.index_of(t)
    if i1 < i0:
        raise ValidationError(f"t={t:g} precedes t0={t0:g}")
    psi, grad_psi, lap_psi = tf.space(grid)
    times = u_traj.times[i0 : i1 + 1]
    theta, dtheta = tf.time(times)
    vol = grid.cell_volume
    density = np.zeros((len(times), 4))
    for n, m in enumerate(range(i0, i1 + 1)):
        u = u_traj.data[m]
        sq = np.sum(u**2, axis=0)
        grad_u = spectral_gradient(u, grid)
        flux = nonlinearity_array(v_traj.data[m], grid, eps)
        # d_k(u_i phi) = phi d_k u_i + u_i d_k phi, with jac[i, k] = d_k u_i.
        d_u_phi = theta[n] * (psi * grad_u + u[:, None] * grad_psi[None, :])
        density[n, 0] = np.sum(grad_u**2 * psi) * theta[n] * vol
        density[n, 1] = np.sum(sq * (dtheta[n] * psi + theta[n] * lap_psi)) * vol
        density[n, 2] = 2.0 * np.einsum("kixyz,ikxyz->", flux, d_u_phi) * vol
        density[n, 3] = 2.0 * np.sum(p_traj.data[m] * np.sum(u * grad_psi, axis=0)) * theta[n] * vol
    if len(times) > 1:
        integrated = scipy.integrate.trapezoid(density, times, axis=0)
    else:
        integrated = np.zeros(4)

    def energy(m: int, weight: float) -> float:
        return float(np.sum(np.sum(u_traj.data[m] ** 2, axis=0) * psi) * weight * vol)

    items = {
        "energy": energy(i1, float(theta[-1])),
        "dissipation": 2.0 * float(integrated[0]),
        "initial": energy(i0, float(theta[0])),
        "heat": float(integrated[1]),
        "transport": float(integrated[2]),
        "pressure": float(integrated[3]),
    }
    budget = lei_budget(residual_rel, items.values(), floor)
    return LEIReport(tf.name, float(times[0]), float(times[-1]), items, budget, eps is not None)


def slei_eval(
    v_traj: Trajectory,
    p_traj: Trajectory,
    tf: TestFunction,
    t0: float,
    t: float,
    eps: float | None = None,
    residual_rel: float = 0.0,
    floor: float = DEFAULT_LEI_FLOOR,
) -> LEIReport:
    """Return the local energy balance of v restarted from the snapshot time t0.

    With ``eps`` the mollified flux is used and the balance is an equality.
    """
    return _energy_balance(v_traj, v_traj, p_traj, tf, t0, t, eps, residual_rel, floor)


def lei_eval(
    v_traj: Trajectory,
    p_traj: Trajectory,
    tf: TestFunction,
    t: float,
    eps: float | None = None,
    residual_rel: float = 0.0,
    floor: float = DEFAULT_LEI_FLOOR,
) -> LEIReport:
    """Return the local energy balance of v on [0, t]."""
    return slei_eval(v_traj, p_traj, tf, v_traj.times[0], t, eps, residual_rel, floor)


def lei_w_eval(
    w_traj: Trajectory,
    V_traj: Trajectory,
    v_traj: Trajectory,
    p_traj: Trajectory,
    tf: TestFunction,
    t: float,
    eps: float | None = None,
    t0: float | None = None,
    residual_rel: float = 0.0,
    floor: float = DEFAULT_LEI_FLOOR,
) -> LEIReport:
    """Return the local energy balance of w = v - V, transported by the flux of v."""
    if V_traj.grid != w_traj.grid or len(V_traj) != len(w_traj):
        raise ValidationError("w and V trajectories do not match")
    start = w_traj.times[0] if t0 is None else t0
    return _energy_balance(w_traj, v_traj, p_traj, tf, start, t, eps, residual_rel, floor)


@dataclass
class DecayReport:
    """Table of m(t, R) = ||w(t) chi_R||_{L^2_uloc} and the fitted constant C0."""

    times: np.ndarray
    R_list: np.ndarray
    table: np.ndarray
    bound: np.ndarray
    C0: float
    slope: float | None

    @property
    def monotone_in_R(self) -> bool:
        """Return whether m(t, .) is nonincreasing at every t."""
        scale = max(float(np.max(self.table)), 1e-300)
        return bool(np.all(np.diff(self.table, axis=1) <= 1e-10 * scale))

    @property
    def slope_verdict(self) -> str | None:
        """Return PASS when the small-t slope reaches the t^(1/20) envelope."""
        if self.slope is None:
            return None
        return PASS if self.slope >= T_TWENTIETH_SLOPE else FAIL

    def csv_rows(self) -> list[list]:
        """Return one (t, R, m, bound, C0) row per table entry."""
        return [
            [t, R, self.table[a, b], self.bound[a, b], self.C0]
            for a, t in enumerate(self.times)
            for b, R in enumerate(self.R_list)
        ]


def decay_monitor(
    w_traj: Trajectory, w0: VectorField, R_list: Sequence[float], t_list: Sequence[float]
) -> DecayReport:
    """Tabulate ||w(t) chi_R||_{L^2_uloc} against t^(1/20) + ||w0 chi_R||_{L^2_uloc}."""
    grid = w_traj.grid
    R_values = np.asarray(sorted(R_list), dtype=float)
    if np.any(R_values <= 0) or np.any(R_values > grid.L / 4 + 1e-12):
        raise ValidationError(f"R values must lie in (0, L/4 = {grid.L / 4:g}]")
    times = np.asarray(t_list, dtype=float)
    if np.any(times <= 0) or np.any(times >= 1.0):
        raise ValidationError("decay times must lie in (0, 1)")
    table = np.zeros((len(times), len(R_values)))
    bound = np.zeros_like(table)
    for b, R in enumerate(R_values):
        chi = CUTOFF.chi(grid, R)
        initial = lq_uloc(VectorField(grid, w0.data * chi), 2).value
        for a, t in enumerate(times):
            w_t = w_traj.data[w_traj.index_of(t)]
            table[a, b] = lq_uloc(VectorField(grid, w_t * chi, t), 2).value
            bound[a, b] = t**0.05 + initial
    C0 = float(np.max(table / bound)) if table.size else 0.0
    slope = None
    w0_zero = not np.any(w0.data)
    column = table[:, -1]
    if w0_zero and len(times) > 1 and np.all(column > 0):
        slope = float(np.polyfit(np.log(times), np.log(column), 1)[0])
    _LOGGER.debug(f"Decay monitor: C0={C0:.4g}, slope={slope}")
    return DecayReport(times, R_values, table, bound, C0, slope)


@dataclass
class GradVProfile:
    """Sup over t of the ball sup-norm of grad e^{t Delta} u0 along outward probes."""

    distances: np.ndarray
    values: np.ndarray
    envelope_C: float
    threshold: float = DEFAULT_DECAY_THRESHOLD

    @property
    def ratio(self) -> float:
        """Return far value over central value."""
        return float(self.values[-1] / self.values[0]) if self.values[0] > 0 else 0.0

    @property
    def decreasing(self) -> bool:
        """Return whether the profile strictly decreases outward."""
        return bool(np.all(np.diff(self.values) < 0))

    @property
    def verdict(self) -> str:
        """Return PASS when the profile decreases below threshold times the center value."""
        if not np.any(self.values):
            return PASS
        return PASS if self.decreasing and self.ratio < self.threshold else FAIL

    def csv_rows(self) -> list[list]:
        """Return one (probe, value) row per probe."""
        return [[d, value] for d, value in zip(self.distances, self.values)]


def gradV_decay_profile(
    u0: VectorField,
    t0: float,
    probes,
    t_end: float = 1.0,
    n_times: int = 9,
    threshold: float = DEFAULT_DECAY_THRESHOLD,
) -> GradVProfile:
    """Return the profile of sup_{t0 <= t <= t_end} ||grad V(t)||_{L^inf(B(x0, 1))}."""
    if t0 <= 0 or t_end <= t0:
        raise ValidationError(f"need 0 < t0 < t_end, got t0={t0:g}, t_end={t_end:g}")
    grid = u0.grid
    probes = np.asarray(probes, dtype=float).reshape(-1, 3)
    masks = []
    for x0 in probes:
        check_region(grid, x0, 1.0)
        masks.append(ball_mask(grid, x0, 1.0))
    values = np.zeros(len(probes))
    for t in np.linspace(t0, t_end, n_times):
        grad = spectral_gradient(heat_apply_array(u0.data, grid, t), grid)
        magnitude = np.sqrt(np.sum(grad**2, axis=(0, 1)))
        for a, mask in enumerate(masks):
            values[a] = max(values[a], float(np.max(magnitude[mask])))
    envelope = t0**-0.5 * (1.0 + t0**-0.75) * lq_uloc(u0, 2).value
    envelope_C = float(np.max(values)) / envelope if envelope > 0 else 0.0
    distances = np.linalg.norm(probes, axis=1)
    return GradVProfile(distances, values, envelope_C, threshold)


@dataclass
class EpProfile:
    """Cylinder quantities of w and p_check at outward probes."""

    distances: np.ndarray
    columns: dict[str, np.ndarray]
    threshold: float = DEFAULT_DECAY_THRESHOLD

    def column_verdict(self, name: str) -> str:
        """Return PASS when a column decreases outward and ends below threshold times its peak."""
        values = self.columns[name]
        peak = float(np.max(values)) if values.size else 0.0
        if peak == 0.0:
            return PASS
        decreasing = bool(np.all(np.diff(values) <= 1e-12 * peak))
        return PASS if decreasing and values[-1] <= self.threshold * peak else FAIL

    @property
    def verdict(self) -> str:
        """Return PASS when every column passes."""
        return PASS if all(self.column_verdict(name) == PASS for name in self.columns) else FAIL

    def csv_rows(self) -> list[list]:
        """Return one row per probe with the four columns and the overall verdict."""
        verdict = self.verdict
        names = ("linf_l2", "l3", "grad_l2", "pcheck_l32")
        return [
            [d, *(self.columns[name][a] for name in names), verdict]
            for a, d in enumerate(self.distances)
        ]


def _cylinder_quantities(
    w_traj: Trajectory, mask: np.ndarray, idx: np.ndarray
) -> tuple[float, float, float]:
    grid = w_traj.grid
    vol = grid.cell_volume
    times = w_traj.times[idx]
    l2, l3, grad = np.zeros(len(idx)), np.zeros(len(idx)), np.zeros(len(idx))
    for n, m in enumerate(idx):
        w = w_traj.data[m]
        magnitude = np.sqrt(np.sum(w**2, axis=0))[mask]
        l2[n] = np.sum(magnitude**2) * vol
        l3[n] = np.sum(magnitude**3) * vol
        grad[n] = np.sum(np.sum(spectral_gradient(w, grid) ** 2, axis=(0, 1))[mask]) * vol
    if len(idx) < 2:
        return float(np.sqrt(l2.max())), 0.0, 0.0
    return (
        float(np.sqrt(l2.max())),
        float(scipy.integrate.trapezoid(l3, times) ** (1.0 / 3.0)),
        float(np.sqrt(scipy.integrate.trapezoid(grad, times))),
    )


def ep_membership_profile(
    w_traj: Trajectory,
    reports: Sequence[PressureReport],
    t_window: tuple[float, float] | None = None,
    threshold: float = DEFAULT_DECAY_THRESHOLD,
) -> EpProfile:
    """Tabulate L^inf L^2, L^3, grad L^2 of w and L^{3/2} of p_check per probe cylinder.

    Probes are taken in the order of the reports, which should march outward.
    """
    grid = w_traj.grid
    t1, t2 = t_window or (w_traj.times[0], w_traj.times[-1])
    idx = w_traj.window(t1, t2)
    columns = {name: np.zeros(len(reports)) for name in ("linf_l2", "l3", "grad_l2", "pcheck_l32")}
    for a, report in enumerate(reports):
        mask = ball_mask(grid, report.x0, EVALUATION_RADIUS)
        linf_l2, l3, grad = _cylinder_quantities(w_traj, mask, idx)
        columns["linf_l2"][a], columns["l3"][a], columns["grad_l2"][a] = linf_l2, l3, grad
        sel = [n for n, t in enumerate(report.times) if t1 - 1e-12 <= t <= t2 + 1e-12]
        density = np.sum(np.abs(report.ball_values[sel]) ** 1.5, axis=1) * grid.cell_volume
        if len(sel) > 1:
            columns["pcheck_l32"][a] = scipy.integrate.trapezoid(density, report.times[sel]) ** (2.0 / 3.0)
    distances = np.array([np.linalg.norm(report.x0) for report in reports])
    return EpProfile(distances, columns, threshold)


@dataclass
class ContinuityReport:
    """Ball-L^2 distances ||v(t) - v(t_first)|| over probe balls."""

    times: np.ndarray
    distances: np.ndarray
    threshold: float = DEFAULT_DECAY_THRESHOLD
    per_center: np.ndarray = dataclass_field(default_factory=lambda: np.zeros(0))

    @property
    def verdict(self) -> str:
        """Return PASS when the distance shrinks toward the initial time."""
        if not np.all(np.isfinite(self.distances)):
            return FAIL
        peak = float(np.max(self.distances)) if self.distances.size else 0.0
        if peak == 0.0 or len(self.distances) < 2:
            return PASS
        return PASS if self.distances[1] <= self.threshold * peak else FAIL


def weak_continuity_probe(
    traj: Trajectory, centers, radius: float = 1.0, threshold: float = DEFAULT_DECAY_THRESHOLD
) -> ContinuityReport:
    """Return max over centers of ||v(t) - v(t_first)||_{L^2(B(x0, radius))} per snapshot."""
    grid: Grid = traj.grid
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    masks = []
    for x0 in centers:
        check_region(grid, x0, radius)
        masks.append(ball_mask(grid, x0, radius))
    per_center = np.zeros((len(traj), len(centers)))
    for n in range(len(traj)):
        diff_sq = np.sum((traj.data[n] - traj.data[0]) ** 2, axis=0)
        for a, mask in enumerate(masks):
            per_center[n, a] = np.sqrt(np.sum(diff_sq[mask]) * grid.cell_volume)
    distances = per_center.max(axis=1) if len(centers) else np.zeros(len(traj))
    return ContinuityReport(traj.times, distances, threshold, per_center)
