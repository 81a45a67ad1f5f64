"""Localized-mollified Navier-Stokes solves, gluing and the perturbation systems."""
from __future__ import annotations

import logging
from collections.abc import Callable
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field as dataclass_field

import numpy as np
import scipy.integrate

from .const import BLOWUP_FACTOR
from .const import DEFAULT_C_PICARD
from .const import DEFAULT_MAX_ITER
from .const import DEFAULT_TOL
from .const import DEFAULT_TOL_WEAK
from .const import FAIL
from .const import MIN_STEPS
from .const import PASS
from .const import RESTART_FRACTION
from .exceptions import NonContraction
from .exceptions import NumericalFailure
from .exceptions import ValidationError
from .kernels import duhamel_series
from .kernels import heat_factor
from .kernels import heat_trajectory
from .lattice import Grid
from .lattice import TensorField
from .lattice import Trajectory
from .lattice import VectorField
from .lattice import irfft3
from .lattice import is_resolvable
from .lattice import leray_project
from .lattice import project_hat
from .lattice import rfft3
from .lattice import spectral_gradient
from .localization import TestFunction
from .localization import window_test_functions
from .norms import CUTOFF
from .norms import energy_norm
from .norms import lq_uloc
from .norms import mollify_array
from .norms import usp_norm

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class MildSolveConfig:
    """Parameters of one Picard mild solve."""

    eps: float
    T: float
    dt: float
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    c_picard: float = DEFAULT_C_PICARD

    @property
    def steps(self) -> int:
        """Return the number of time steps in the window."""
        return int(round(self.T / self.dt))

    def window_limit(self, bound: float) -> float:
        """Return min(1, c eps^3 B^-2) for the data bound B."""
        if bound <= 0:
            return 1.0
        return min(1.0, self.c_picard * self.eps**3 / bound**2)

    def validate(self, grid: Grid, bound: float | None = None) -> None:
        """Raise ValidationError unless the solve is admissible on grid.

        ``bound`` is the L^2_uloc norm of the data; None skips the window limit.
        """
        if not is_resolvable(grid, self.eps):
            raise ValidationError(
                f"eps={self.eps:g} is unresolvable on h={grid.h:g}: need 2h <= eps < L"
            )
        if self.T <= 0 or self.dt <= 0:
            raise ValidationError("T and dt must be positive")
        if abs(self.T / self.dt - self.steps) > 1e-9 * self.steps:
            raise ValidationError(f"T={self.T:g} is not a multiple of dt={self.dt:g}")
        if self.steps < MIN_STEPS:
            raise ValidationError(f"dt={self.dt:g} exceeds T/{MIN_STEPS} for T={self.T:g}")
        if self.steps % 8:
            raise ValidationError(f"T/dt = {self.steps} must be divisible by 8 for restarts")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValidationError("tol must be positive and max_iter at least 1")
        if bound is not None and self.T > self.window_limit(bound) * (1.0 + 1e-12):
            raise ValidationError(
                f"T={self.T:g} exceeds the contraction window {self.window_limit(bound):.6g} "
                f"for eps={self.eps:g}, B={bound:.6g}"
            )

    def times(self, t_start: float = 0.0) -> np.ndarray:
        """Return the snapshot times of a window starting at t_start."""
        return t_start + self.dt * np.arange(self.steps + 1)


@dataclass
class MildSolveResult:
    """Fixed point of the Picard map and its iteration history."""

    trajectory: Trajectory
    iterations: int
    contraction: float
    increments: list[float]
    config: MildSolveConfig
    bound: float


def nonlinearity_array(v: np.ndarray, grid: Grid, eps: float | None) -> np.ndarray:
    """Return N_ij = (J_eps v)_i v_j Phi_eps, or v_i v_j when eps is None."""
    if eps is None:
        return v[:, None] * v[None, :]
    jv = mollify_array(v, grid, eps)
    return jv[:, None] * v[None, :] * CUTOFF.phi_eps(grid, eps)


def nonlinearity(v: VectorField, eps: float) -> TensorField:
    """Return the localized-mollified flux J_eps(v) (x) v Phi_eps."""
    if not is_resolvable(v.grid, eps):
        raise ValidationError(f"eps={eps:g} is unresolvable on h={v.grid.h:g}")
    return TensorField(v.grid, nonlinearity_array(v.data, v.grid, eps), v.time)


def picard_map(
    traj: Trajectory,
    v0: VectorField,
    eps: float,
    background: Trajectory | None = None,
) -> Trajectory:
    """Return e^{(t - t0) Delta} v0 - int_{t0}^t e^{(t - s) Delta} P div N(v + background)(s) ds."""
    grid = traj.grid
    times = traj.times
    v0_hat = rfft3(v0.data)
    free = np.stack([irfft3(v0_hat * heat_factor(grid, t - times[0]), grid) for t in times])

    def source(n: int) -> np.ndarray:
        v = traj.data[n] if background is None else traj.data[n] + background.data[n]
        return nonlinearity_array(v, grid, eps)

    return traj.with_data(free - duhamel_series(source, times, grid), eps)


def _fixed_point(
    step: Callable[[Trajectory], Trajectory],
    initial: Trajectory,
    measure: Callable[[Trajectory], float],
    tol: float,
    max_iter: int,
    label: str,
) -> tuple[Trajectory, int, list[float], list[float]]:
    current = initial
    increments: list[float] = []
    factors: list[float] = []
    for iteration in range(1, max_iter + 1):
        candidate = step(current)
        increment = measure(candidate - current)
        increments.append(increment)
        _LOGGER.debug(f"{label} iteration {iteration}: increment {increment:.3e}")
        current = candidate
        if len(increments) > 1:
            factors.append(increment / increments[-2])
        if increment < tol:
            return current, iteration, factors, increments
        if factors and factors[-1] >= 1.0:
            raise NonContraction(
                f"{label} is not contracting (factor {factors[-1]:.4g}); use a shorter window",
                factors[-1],
            )
    raise NonContraction(
        f"{label} did not reach tol={tol:g} in {max_iter} iterations; use a shorter window",
        max(factors, default=1.0),
    )


def picard_mild_solve(
    v0: VectorField,
    cfg: MildSolveConfig,
    t_start: float = 0.0,
    check_window: bool = True,
) -> MildSolveResult:
    """Solve the integral form of the localized-mollified system on [t_start, t_start + T].

    Iteration starts from the heat flow; increments are measured in the local energy norm.
    """
    grid = v0.grid
    bound = lq_uloc(v0, 2).value
    cfg.validate(grid, bound if check_window else None)
    times = cfg.times(t_start)
    initial = heat_trajectory(v0, times - t_start)
    initial = Trajectory(grid, times, initial.data, cfg.eps)

    def measure(diff: Trajectory) -> float:
        return energy_norm(diff, times[0], times[-1]).value

    trajectory, iterations, factors, increments = _fixed_point(
        lambda traj: picard_map(traj, v0, cfg.eps),
        initial,
        measure,
        cfg.tol,
        cfg.max_iter,
        f"Picard solve (eps={cfg.eps:g})",
    )
    contraction = max(factors, default=0.0)
    _LOGGER.info(
        f"Picard solve eps={cfg.eps:g} on [{times[0]:g}, {times[-1]:g}] converged in "
        f"{iterations} iterations, contraction {contraction:.4g}"
    )
    return MildSolveResult(trajectory, iterations, contraction, increments, cfg, bound)


def epsilon_family_solve(
    v0: VectorField, eps_list: Sequence[float], T: float, dt: float, **options
) -> tuple[list[MildSolveResult], np.ndarray]:
    """Solve for every eps on one window; return results and successive U^{3,3} distances."""
    results = [picard_mild_solve(v0, MildSolveConfig(eps, T, dt, **options)) for eps in eps_list]
    distances = np.array(
        [
            usp_norm(b.trajectory - a.trajectory, 3.0, 3.0, 0.0, T).value
            for a, b in zip(results[:-1], results[1:])
        ]
    )
    return results, distances


@dataclass
class ResidualReport:
    """Weak-form residuals over a family of test functions."""

    residuals: np.ndarray
    scales: np.ndarray
    tol: float

    @property
    def max_abs(self) -> float:
        """Return the largest absolute residual."""
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0

    @property
    def relative(self) -> float:
        """Return the largest residual relative to its test function's term magnitudes.

        Each test function is scaled by its largest component, so components that
        vanish by symmetry do not turn rounding noise into a failure.
        """
        if not self.residuals.size:
            return 0.0
        scales = np.max(self.scales, axis=1, keepdims=True)
        safe = np.where(scales > 0, scales, 1.0)
        rel = np.where(scales > 0, np.abs(self.residuals) / safe, 0.0)
        return float(np.max(rel))

    @property
    def verdict(self) -> str:
        """Return PASS when the relative residual is within tolerance."""
        return PASS if self.relative <= self.tol else FAIL


def weak_residual(
    traj: Trajectory,
    p_traj: Trajectory,
    eps: float | None,
    test_functions: Sequence[TestFunction] | None = None,
    transport: Trajectory | None = None,
    tol: float = DEFAULT_TOL_WEAK,
) -> ResidualReport:
    """Evaluate int int -v.d_t z - v.Lap z - N_ki d_k z_i - p div z for z = theta psi e_m.

    ``transport`` supplies the velocity of the flux N (defaults to traj); ``eps=None``
    uses N = v (x) v.
    """
    grid = traj.grid
    times = traj.times
    if p_traj.grid != grid or len(p_traj) != len(traj):
        raise ValidationError("pressure and velocity trajectories do not match")
    carrier = traj if transport is None else transport
    if test_functions is None:
        test_functions = window_test_functions(times[0], times[-1])
    vol = grid.cell_volume
    residuals = np.zeros((len(test_functions), 3))
    scales = np.zeros((len(test_functions), 3))
    for a, tf in enumerate(test_functions):
        psi, grad, lap = tf.space(grid)
        theta, dtheta = tf.time(times)
        terms = np.zeros((len(times), 3, 4))
        for n in range(len(times)):
            v = traj.data[n]
            flux = nonlinearity_array(carrier.data[n], grid, eps)
            terms[n, :, 0] = -dtheta[n] * np.sum(v * psi, axis=(1, 2, 3)) * vol
            terms[n, :, 1] = -theta[n] * np.sum(v * lap, axis=(1, 2, 3)) * vol
            terms[n, :, 2] = -theta[n] * np.einsum("kixyz,kxyz->i", flux, grad) * vol
            terms[n, :, 3] = -theta[n] * np.sum(p_traj.data[n] * grad, axis=(1, 2, 3)) * vol
        integrated = scipy.integrate.trapezoid(terms, times, axis=0)
        residuals[a] = np.sum(integrated, axis=1)
        scales[a] = np.sum(np.abs(integrated), axis=1)
    return ResidualReport(residuals, scales, tol)


def residual_check(
    traj: Trajectory,
    p_traj: Trajectory,
    eps: float | None,
    tol_weak: float = DEFAULT_TOL_WEAK,
    test_functions: Sequence[TestFunction] | None = None,
) -> ResidualReport:
    """Return the weak-form residual report of (v, p) for the localized-mollified system."""
    report = weak_residual(traj, p_traj, eps, test_functions, tol=tol_weak)
    _LOGGER.debug(f"Weak residual max={report.max_abs:.3e} relative={report.relative:.3e}")
    return report


@dataclass
class GlueResult:
    """A trajectory assembled from restarted solves."""

    trajectory: Trajectory
    seams: list[float]
    segments: list[MildSolveResult] = dataclass_field(default_factory=list)


def extend_glue(
    first: MildSolveResult, T_total: float, max_steps: int | None = None
) -> GlueResult:
    """Extend a solve on [0, S] to [0, T_total] by restarting at 7S/8 and gluing."""
    cfg = first.config
    traj = first.trajectory
    grid = traj.grid
    restart = int(round(RESTART_FRACTION * cfg.steps))
    total_steps = T_total / cfg.dt
    if abs(total_steps - round(total_steps)) > 1e-9 * max(total_steps, 1.0):
        raise ValidationError(f"T_total={T_total:g} is not a multiple of dt={cfg.dt:g}")
    total_steps = int(round(total_steps))

    data = [traj.data[n] for n in range(min(len(traj), total_steps + 1))]
    segments = [first]
    seams: list[float] = []
    while len(data) < total_steps + 1:
        if max_steps is not None and len(seams) >= max_steps:
            break
        start_index = (len(seams) + 1) * restart
        tau = start_index * cfg.dt
        data = data[: start_index + 1]
        v_tau = VectorField(grid, data[start_index], tau)
        segment = picard_mild_solve(v_tau, cfg, t_start=tau, check_window=False)
        segments.append(segment)
        seams.append(tau)
        needed = total_steps + 1 - len(data)
        data.extend(segment.trajectory.data[1 : 1 + needed])
        _LOGGER.info(f"Glued restart at t={tau:g}, horizon now {(len(data) - 1) * cfg.dt:g}")
    times = cfg.dt * np.arange(len(data))
    glued = Trajectory(grid, times, np.stack(data), cfg.eps)
    return GlueResult(glued, seams, segments)


def integral_equation_defect(traj: Trajectory, v0: VectorField, eps: float) -> float:
    """Return the local energy norm of traj - picard_map(traj) relative to traj."""
    t0, t1 = traj.times[0], traj.times[-1]
    moved = picard_map(traj, v0, eps)
    scale = energy_norm(traj, t0, t1).value
    defect = energy_norm(moved - traj, t0, t1).value
    return defect / scale if scale > 0 else defect


def perturb_w(traj: Trajectory, u0: VectorField) -> Trajectory:
    """Return w(t) = v(t) - e^{t Delta} u0 on the trajectory times."""
    if u0.grid != traj.grid:
        raise ValidationError("u0 and the trajectory live on different grids")
    V = heat_trajectory(u0, traj.times)
    return traj.with_data(traj.data - V.data, traj.epsilon)


def perturb_residual(
    w_traj: Trajectory,
    v_traj: Trajectory,
    p_traj: Trajectory,
    eps: float | None,
    tol_weak: float = DEFAULT_TOL_WEAK,
    test_functions: Sequence[TestFunction] | None = None,
) -> ResidualReport:
    """Return the weak residual of the perturbed system for w, with flux built from v."""
    return weak_residual(w_traj, p_traj, eps, test_functions, transport=v_traj, tol=tol_weak)


@dataclass
class WeightedSolveState:
    """Fixed point of the h-equation in the weighted space."""

    t0: float
    S: float
    trajectory: Trajectory
    f_norm: float
    components: dict[str, float]
    iterations: int
    contraction: float
    delta: float

    @property
    def fitted_C(self) -> float:
        """Return ||h||_F / delta."""
        return self.f_norm / self.delta if self.delta > 0 else 0.0


def weighted_norm(traj: Trajectory, t0: float) -> tuple[float, dict[str, float]]:
    """Return U^{inf,4} + sup (t - t0)^(3/8) ||h(t)||_inf and both summands."""
    uloc_part = usp_norm(traj, np.inf, 4.0, traj.times[0], traj.times[-1]).value
    sup = np.sqrt(np.sum(traj.data**2, axis=1)).max(axis=(1, 2, 3))
    weighted = float(np.max((traj.times - t0) ** 0.375 * sup))
    return uloc_part + weighted, {"u_inf_4": uloc_part, "weighted_sup": weighted}


def _window(traj: Trajectory, t0: float, S: float) -> Trajectory:
    idx = traj.window(t0, t0 + S)
    if abs(traj.times[idx[0]] - t0) > 1e-9 * (1 + t0) or abs(traj.times[idx[-1]] - t0 - S) > 1e-9 * (1 + t0 + S):
        raise ValidationError(f"window [{t0:g}, {t0 + S:g}] does not match snapshot times")
    return Trajectory(traj.grid, traj.times[idx], traj.data[idx], traj.epsilon)


def weighted_map(h: Trajectory, h0: VectorField, V: Trajectory, eps: float) -> Trajectory:
    """Return the h-equation map with flux J_eps H (x) H Phi_eps, H = V + h."""
    return picard_map(h, h0, eps, background=V)


def h_weighted_solve(
    h0: VectorField,
    V_traj: Trajectory,
    t0: float,
    S: float,
    eps: float,
    delta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> WeightedSolveState:
    """Solve the h-equation on [t0, t0 + S] by iteration in the weighted norm."""
    V = _window(V_traj, t0, S)
    h0_norm = lq_uloc(h0, 4).value
    if h0_norm >= delta:
        raise ValidationError(f"||h0||_L4uloc = {h0_norm:.6g} is not below delta = {delta:g}")
    initial = heat_trajectory(h0, V.times - t0)
    initial = Trajectory(V.grid, V.times, initial.data, eps)
    trajectory, iterations, factors, _ = _fixed_point(
        lambda h: weighted_map(h, h0, V, eps),
        initial,
        lambda diff: weighted_norm(diff, t0)[0],
        tol,
        max_iter,
        f"weighted h-solve (S={S:g})",
    )
    f_norm, components = weighted_norm(trajectory, t0)
    return WeightedSolveState(
        t0, S, trajectory, f_norm, components, iterations, max(factors, default=0.0), delta
    )


@dataclass
class SplitSolveResult:
    """Spectral march of the W-equation with its energy balance."""

    trajectory: Trajectory
    energy_lhs: np.ndarray
    energy_rhs: np.ndarray
    gronwall_C: float
    M1: float
    tol: float = 1e-2

    @property
    def energy_defect(self) -> float:
        """Return max |lhs - rhs| relative to the initial energy scale."""
        scale = max(float(np.max(np.abs(self.energy_rhs))), 1e-300)
        return float(np.max(np.abs(self.energy_lhs - self.energy_rhs))) / scale

    @property
    def verdict(self) -> str:
        """Return PASS when the energy balance closes within tolerance."""
        if not np.any(self.energy_rhs):
            return PASS
        return PASS if self.energy_defect <= self.tol else FAIL


def _advect(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    """Return (a . grad) b."""
    jac = spectral_gradient(b, grid)
    return np.einsum("j...,ij...->i...", a, jac)


def w_forcing(W: np.ndarray, H: np.ndarray, grid: Grid, eps: float) -> np.ndarray:
    """Return f_W = -(J_eps(H + W) . grad) W - (J_eps W . grad) H."""
    return -_advect(mollify_array(H + W, grid, eps), W, grid) - _advect(mollify_array(W, grid, eps), H, grid)


def split_w_solve(
    W0: VectorField, H_traj: Trajectory, t0: float, S: float, eps: float, tol: float = 1e-2
) -> SplitSolveResult:
    """March the W-equation spectrally (Crank-Nicolson / Adams-Bashforth, Heun start)."""
    grid = W0.grid
    H = _window(H_traj, t0, S)
    times = H.times
    cell = grid.cell_volume
    W_hat = project_hat(rfft3(W0.data), grid)
    initial_norm = float(np.sqrt(np.sum(W0.data**2) * cell))
    data = np.zeros((len(times), 3) + grid.shape)
    data[0] = irfft3(W_hat, grid)
    forcing = np.zeros(len(times))
    dissipation = np.zeros(len(times))

    def f_hat(W: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
        f = w_forcing(W, H.data[n], grid, eps)
        return project_hat(rfft3(f), grid), f

    f_prev_hat, f_prev = f_hat(data[0], 0)
    forcing[0] = np.sum(f_prev * data[0]) * cell
    dissipation[0] = np.sum(spectral_gradient(data[0], grid) ** 2) * cell
    for n in range(1, len(times)):
        dt = times[n] - times[n - 1]
        explicit = (1.0 - 0.5 * dt * grid.k2) * W_hat
        implicit = 1.0 + 0.5 * dt * grid.k2
        if n == 1:
            predictor = (explicit + dt * f_prev_hat) / implicit
            f_pred_hat, _ = f_hat(irfft3(predictor, grid), 1)
            W_hat = (explicit + 0.5 * dt * (f_prev_hat + f_pred_hat)) / implicit
        else:
            W_hat = (explicit + dt * (1.5 * f_prev_hat - 0.5 * f_older_hat)) / implicit
        data[n] = irfft3(W_hat, grid)
        norm = float(np.sqrt(np.sum(data[n] ** 2) * cell))
        if initial_norm > 0 and norm > BLOWUP_FACTOR * initial_norm:
            raise NumericalFailure(
                f"W-march blew up at t={times[n]:g}: ||W|| = {norm:.4g} > {BLOWUP_FACTOR:g} ||W0||"
            )
        f_older_hat = f_prev_hat
        f_prev_hat, f_prev = f_hat(data[n], n)
        forcing[n] = np.sum(f_prev * data[n]) * cell
        dissipation[n] = np.sum(spectral_gradient(data[n], grid) ** 2) * cell

    energy = np.sum(data**2, axis=(1, 2, 3, 4)) * cell
    lhs = energy + 2.0 * scipy.integrate.cumulative_trapezoid(dissipation, times, initial=0.0)
    rhs = energy[0] + 2.0 * scipy.integrate.cumulative_trapezoid(forcing, times, initial=0.0)
    M1 = float(np.max(np.sqrt(np.sum(H.data**2, axis=1))))
    gronwall = 0.0
    if energy[0] > 0:
        growth = np.log(np.maximum(energy[1:], 1e-300) / energy[0]) / ((1.0 + M1) * (times[1:] - t0))
        gronwall = max(0.0, float(np.max(growth)))
    trajectory = Trajectory(grid, times, data, eps)
    return SplitSolveResult(trajectory, lhs, rhs, gronwall, M1, tol)


@dataclass
class SpliceResult:
    """One extension step v = V + h + W on [t0, t0 + S]."""

    trajectory: Trajectory
    h_state: WeightedSolveState
    w_result: SplitSolveResult
    W0: VectorField
    h0: VectorField


def splice_extension(
    v_traj: Trajectory,
    u0: VectorField,
    t0: float,
    S: float,
    eps: float,
    delta: float,
    R: float,
) -> SpliceResult:
    """Split w(t0) into a compact part W0 and a small tail h0, solve both, recombine."""
    grid = v_traj.grid
    n0 = v_traj.index_of(t0)
    dt = float(v_traj.times[1] - v_traj.times[0]) if len(v_traj) > 1 else S / MIN_STEPS
    steps = int(round(S / dt))
    times = t0 + dt * np.arange(steps + 1)
    V = heat_trajectory(u0, times)
    w_t0 = v_traj.data[n0] - V.data[0]
    W0 = leray_project(VectorField(grid, w_t0 * CUTOFF.field(grid, scale=R), t0))
    h0 = VectorField(grid, w_t0 - W0.data, t0)
    h_state = h_weighted_solve(h0, V, t0, S, eps, delta)
    H = V + h_state.trajectory
    w_result = split_w_solve(W0, H, t0, S, eps)
    total = H.with_data(H.data + w_result.trajectory.data, eps)
    _LOGGER.info(f"Extension step on [{t0:g}, {t0 + S:g}]: ||h||_F={h_state.f_norm:.4g}")
    return SpliceResult(total, h_state, w_result, W0, h0)
