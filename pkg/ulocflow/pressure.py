"""Global and local pressure representations."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from dataclasses import field as dataclass_field

import numpy as np
import scipy.integrate

from .const import DEFAULT_TOL_PRESS
from .const import FAIL
from .const import PASS
from .exceptions import ValidationError
from .kernels import riesz_contract_array
from .kernels import riesz_contract_at
from .kernels import riesz_gradient_contract_array
from .kernels import riesz_gradient_contract_at
from .kernels import riesz_tail_bound
from .lattice import Grid
from .lattice import Trajectory
from .lattice import ball_mask
from .lattice import check_region
from .lattice import irfft3
from .lattice import rfft3
from .lattice import spectral_divergence
from .norms import CUTOFF
from .norms import usp_norm
from .solver import nonlinearity_array

_LOGGER = logging.getLogger(__name__)

# Radii of the singular ball and of the evaluation ball.
SPLIT_RADIUS = 2.0
EVALUATION_RADIUS = 1.5

PRESSURE_CSV_HEADER = ("x0x", "x0y", "x0z", "t", "c_or_q", "variance", "tail_bound", "verdict")


@dataclass
class PressureReport:
    """Local pressure samples on B(x0, 3/2) and the time series that closes p."""

    kind: str
    x0: tuple[float, float, float]
    times: np.ndarray
    ball_values: np.ndarray
    series: np.ndarray
    variance: np.ndarray
    tail_bound: np.ndarray
    tol: float
    scale: float
    extras: dict[str, np.ndarray | float] = dataclass_field(default_factory=dict)

    @property
    def max_variance(self) -> float:
        """Return the largest spatial variance over the sampled times."""
        return float(np.max(self.variance)) if self.variance.size else 0.0

    @property
    def verdict(self) -> str:
        """Return PASS when every variance is within tol (1 + ||v||^2_{U^{3,3}}) plus its far-field tail."""
        return PASS if np.all(self.variance <= self.tol * self.scale + self.tail_bound) else FAIL

    def csv_rows(self) -> list[list]:
        """Return one (x0, t, c_or_q, variance, tail_bound, verdict) row per time."""
        verdict = self.verdict
        return [
            [*self.x0, t, c, var, tail, verdict]
            for t, c, var, tail in zip(self.times, self.series, self.variance, self.tail_bound)
        ]


def _as_center(grid: Grid, x0) -> tuple[float, float, float]:
    x0 = tuple(float(c) for c in x0)
    if not grid.is_node(x0):
        raise ValidationError(f"pressure centers must be lattice nodes, got {list(x0)}")
    return x0


def pressure_spectral_array(N: np.ndarray, grid: Grid) -> np.ndarray:
    """Return p with -Lap p = d_i d_j N_ij and zero box mean."""
    N_hat = rfft3(N)
    kd = grid.kd
    p_hat = -sum(kd[i] * kd[j] * N_hat[i, j] for i in range(3) for j in range(3)) * grid.inv_kd2
    return irfft3(p_hat, grid)


def pressure_spectral(N_traj: Trajectory) -> Trajectory:
    """Return the spectral pressure of a tensor trajectory."""
    if N_traj.components != (3, 3):
        raise ValidationError("pressure_spectral expects a tensor trajectory")
    data = np.stack([pressure_spectral_array(N, N_traj.grid) for N in N_traj.data])
    return Trajectory(N_traj.grid, N_traj.times, data, N_traj.epsilon)


def poisson_defect(p: np.ndarray, N: np.ndarray, grid: Grid) -> float:
    """Return ||-Lap p - d_i d_j N_ij|| relative to ||d_i d_j N_ij||."""
    kd = grid.kd
    N_hat = rfft3(N)
    source = -sum(kd[i] * kd[j] * N_hat[i, j] for i in range(3) for j in range(3))
    defect = grid.kd2 * rfft3(p) - source
    scale = np.linalg.norm(source)
    return float(np.linalg.norm(defect) / scale) if scale > 0 else float(np.linalg.norm(defect))


def pressure_trajectory(v_traj: Trajectory, eps: float | None) -> Trajectory:
    """Return the pressure of v, built from the localized-mollified flux when eps is given."""
    grid = v_traj.grid
    data = np.stack(
        [pressure_spectral_array(nonlinearity_array(v, grid, eps), grid) for v in v_traj.data]
    )
    return Trajectory(grid, v_traj.times, data, eps)


def phat_array(G: np.ndarray, grid: Grid, x0) -> np.ndarray:
    """Return -tr G / 3 + pv int_B K_ij(x - y) G_ij + int_{B^c} (K_ij(x - y) - K_ij(x0 - y)) G_ij.

    B = B(x0, 2); the result is valid on B(x0, 3/2).
    """
    outside = ~ball_mask(grid, x0, SPLIT_RADIUS)
    trace = np.einsum("ii...->...", G)
    return -trace / 3.0 + riesz_contract_array(G, grid) - riesz_contract_at(G * outside, grid, x0)


def _tail_bound(G: np.ndarray, grid: Grid) -> float:
    """Return the box-truncation bound of the far-field integral on B(x0, 3/2)."""
    return riesz_tail_bound(G, grid, EVALUATION_RADIUS)


def _ball_lp(values: np.ndarray, times: np.ndarray, grid: Grid, p: float) -> float:
    """Return the L^p norm over the cylinder of ball samples, shape (nt, n_ball)."""
    density = np.sum(np.abs(values) ** p, axis=1) * grid.cell_volume
    if len(times) < 2:
        return float(density[0] ** (1.0 / p))
    return float(scipy.integrate.trapezoid(density, times) ** (1.0 / p))


def _velocity_scale(v_traj: Trajectory) -> float:
    if len(v_traj) < 2:
        return 0.0
    return usp_norm(v_traj, 3.0, 3.0, v_traj.times[0], v_traj.times[-1]).value ** 2


def phat_local(
    v_traj: Trajectory,
    x0,
    eps: float | None = None,
    p_traj: Trajectory | None = None,
    tol_press: float = DEFAULT_TOL_PRESS,
) -> PressureReport:
    """Evaluate the local pressure about x0 and the series c_x0(t) = avg_B (p - p_hat).

    ``p_traj`` defaults to the spectral pressure of the matching flux.
    """
    grid = v_traj.grid
    x0 = _as_center(grid, x0)
    check_region(grid, x0, SPLIT_RADIUS)
    if p_traj is None:
        p_traj = pressure_trajectory(v_traj, eps)
    if p_traj.grid != grid or len(p_traj) != len(v_traj):
        raise ValidationError("pressure and velocity trajectories do not match")
    inside = ball_mask(grid, x0, EVALUATION_RADIUS)
    nt = len(v_traj)
    ball_values = np.empty((nt, int(np.count_nonzero(inside))))
    series, variance, tail = np.empty(nt), np.empty(nt), np.empty(nt)
    for n in range(nt):
        G = nonlinearity_array(v_traj.data[n], grid, eps)
        local = phat_array(G, grid, x0)[inside]
        d = p_traj.data[n][inside] - local
        ball_values[n] = local
        series[n] = float(np.mean(d))
        variance[n] = float(np.max(d) - np.min(d))
        tail[n] = _tail_bound(G, grid)
    scale = _velocity_scale(v_traj)
    lp = _ball_lp(ball_values, v_traj.times, grid, 1.5)
    report = PressureReport(
        kind="phat",
        x0=x0,
        times=v_traj.times,
        ball_values=ball_values,
        series=series,
        variance=variance,
        tail_bound=tail,
        tol=tol_press,
        scale=1.0 + scale,
        extras={"phat_l32": lp, "velocity_u33_sq": scale, "ratio": lp / scale if scale > 0 else 0.0},
    )
    if report.verdict == FAIL:
        _LOGGER.warning(f"Pressure decomposition fails at {list(x0)}: variance {report.max_variance:.3e}")
    else:
        _LOGGER.debug(f"Pressure decomposition at {list(x0)}: variance {report.max_variance:.3e}")
    return report


def decomposition_check(
    p_traj: Trajectory,
    v_traj: Trajectory,
    x0,
    eps: float | None = None,
    tol_press: float = DEFAULT_TOL_PRESS,
) -> PressureReport:
    """Check p = p_hat + c_x0(t) on B(x0, 3/2) for a supplied pressure."""
    return phat_local(v_traj, x0, eps, p_traj=p_traj, tol_press=tol_press)


def cx0_direct(v_traj: Trajectory, x0, n: int, eps: float | None = None) -> np.ndarray:
    """Return c_x0(t) - c_0(t) from the three far-field integrals split at radius 2^(n+1).

    Needs B(x0, 3/2) inside B(0, 2^n) inside the box.
    """
    grid = v_traj.grid
    x0 = _as_center(grid, x0)
    origin = (0.0, 0.0, 0.0)
    radius = 2.0**n
    if np.linalg.norm(x0) + EVALUATION_RADIUS > radius + 1e-12 or radius > grid.L + 1e-12:
        raise ValidationError(f"n={n} needs |x0| + 3/2 <= 2^n <= L, got x0={list(x0)}")
    big = ball_mask(grid, origin, 2.0 * radius)
    near_x0 = ball_mask(grid, x0, SPLIT_RADIUS)
    near_0 = ball_mask(grid, origin, SPLIT_RADIUS)
    series = np.empty(len(v_traj))
    for m, v in enumerate(v_traj.data):
        G = nonlinearity_array(v, grid, eps)
        shell_x0 = riesz_contract_at(G * (big & ~near_x0), grid, x0)
        shell_0 = riesz_contract_at(G * (big & ~near_0), grid, origin)
        outer = G * ~big
        tail = riesz_contract_at(outer, grid, x0) - riesz_contract_at(outer, grid, origin)
        series[m] = shell_x0 - shell_0 + tail
    return series


def check_tau(grid: Grid, tau: float) -> None:
    """Raise unless tau = 2 or tau > 4 with 2 tau < L / 2."""
    if tau == SPLIT_RADIUS:
        return
    if not (tau > 4.0 and 2.0 * tau < grid.L / 2.0):
        raise ValidationError(f"tau={tau:g} must be 2, or > 4 with 2 tau < L/2 = {grid.L / 2:g}")


def pcheck_terms(
    v: np.ndarray, V: np.ndarray, grid: Grid, x0, tau: float, eps: float | None = None
) -> dict[str, np.ndarray | float]:
    """Return the itemized terms of the decomposition about x0 for one snapshot.

    G is the flux of V and F the flux of v minus G; rho (V . grad) V is formed
    as div(rho G) - G grad rho.
    """
    rho, grad_rho, _ = CUTOFF.derivatives(grid, x0, scale=tau)
    G = nonlinearity_array(V, grid, eps)
    F = nonlinearity_array(v, grid, eps) - G
    G_rho = G * rho
    G_grad_rho = np.einsum("ij...,j...->i...", G, grad_rho)
    G_far = G * (1.0 - rho)
    outside = ~ball_mask(grid, x0, SPLIT_RADIUS)

    near = riesz_gradient_contract_array(spectral_divergence(np.swapaxes(G_rho, 0, 1), grid), grid)
    near -= riesz_gradient_contract_array(G_grad_rho, grid)
    near -= float(np.mean(np.einsum("ii...->...", G_rho))) / 3.0
    boundary = riesz_gradient_contract_array(G_grad_rho, grid)
    q_hat = riesz_gradient_contract_at(G_grad_rho, grid, x0)
    return {
        "p_F": phat_array(F, grid, x0),
        "p_G_near": near,
        "p_G_far": riesz_contract_array(G_far, grid) - riesz_contract_at(G_far, grid, x0),
        "p_G_boundary": boundary - q_hat,
        "q_tilde": -riesz_contract_at(G_rho * outside, grid, x0),
        "q_hat": q_hat,
    }


def pcheck_local(
    w_traj: Trajectory,
    V_traj: Trajectory,
    x0,
    tau: float = SPLIT_RADIUS,
    eps: float | None = None,
    p_traj: Trajectory | None = None,
    tol_press: float = DEFAULT_TOL_PRESS,
) -> PressureReport:
    """Evaluate p_check about x0 for v = V + w and the series q_x0(t) = avg_B (p - p_check)."""
    grid = w_traj.grid
    x0 = _as_center(grid, x0)
    check_tau(grid, tau)
    check_region(grid, x0, CUTOFF.outer * tau)
    if V_traj.grid != grid or len(V_traj) != len(w_traj):
        raise ValidationError("w and V trajectories do not match")
    v_traj = w_traj + V_traj
    if p_traj is None:
        p_traj = pressure_trajectory(v_traj, eps)
    inside = ball_mask(grid, x0, EVALUATION_RADIUS)
    nt = len(w_traj)
    ball_values = np.empty((nt, int(np.count_nonzero(inside))))
    series, variance, tail = np.empty(nt), np.empty(nt), np.empty(nt)
    q_tilde, q_hat, identity = np.empty(nt), np.empty(nt), np.empty(nt)
    for n in range(nt):
        v, V = v_traj.data[n], V_traj.data[n]
        terms = pcheck_terms(v, V, grid, x0, tau, eps)
        local = sum(terms[key] for key in ("p_F", "p_G_near", "p_G_far", "p_G_boundary"))[inside]
        d = p_traj.data[n][inside] - local
        ball_values[n] = local
        series[n] = float(np.mean(d))
        variance[n] = float(np.max(d) - np.min(d))
        q_tilde[n], q_hat[n] = terms["q_tilde"], terms["q_hat"]
        G = nonlinearity_array(v, grid, eps)
        phat = phat_array(G, grid, x0)[inside]
        identity[n] = float(np.max(np.abs(phat - local - q_tilde[n] - q_hat[n])))
        tail[n] = _tail_bound(G, grid)
    V_scale = 0.0
    if len(V_traj) > 1:
        V_scale = usp_norm(V_traj, np.inf, 2.0, V_traj.times[0], V_traj.times[-1]).value ** 2
    q_size = float(np.max(np.abs(q_tilde) + np.abs(q_hat)))
    report = PressureReport(
        kind="pcheck",
        x0=x0,
        times=w_traj.times,
        ball_values=ball_values,
        series=series,
        variance=variance,
        tail_bound=tail,
        tol=tol_press,
        scale=1.0 + _velocity_scale(v_traj),
        extras={
            "q_tilde": q_tilde,
            "q_hat": q_hat,
            "identity_defect": float(np.max(identity)),
            "q_bound_ratio": q_size / V_scale if V_scale > 0 else 0.0,
            "pcheck_l32": _ball_lp(ball_values, w_traj.times, grid, 1.5),
            "tau": tau,
        },
    )
    _LOGGER.debug(
        f"p_check at {list(x0)} (tau={tau:g}): variance {report.max_variance:.3e}, "
        f"identity defect {report.extras['identity_defect']:.3e}"
    )
    return report
