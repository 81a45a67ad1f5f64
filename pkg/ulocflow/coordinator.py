"""Stage runner for experiment configs and solution verification."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from .config_flow import config_hash
from .const import CONF_C_PICARD
from .const import CONF_CENTER
from .const import CONF_CENTERS
from .const import CONF_DATA
from .const import CONF_DELTA
from .const import CONF_DIAGNOSTICS
from .const import CONF_DIR
from .const import CONF_ENERGY_BUDGET
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
from .const import FAIL
from .const import FAILED_MARKER
from .const import MANIFEST_FILE
from .const import MIN_STEPS
from .const import PASS
from .diagnostics import DECAY_CSV_HEADER
from .diagnostics import EP_CSV_HEADER
from .diagnostics import GRADV_CSV_HEADER
from .diagnostics import LEI_CSV_HEADER
from .diagnostics import decay_monitor
from .diagnostics import ep_membership_profile
from .diagnostics import gradV_decay_profile
from .diagnostics import lei_eval
from .diagnostics import lei_w_eval
from .diagnostics import slei_eval
from .diagnostics import weak_continuity_probe
from .exceptions import StageFailed
from .exceptions import UlocflowError
from .exceptions import ValidationError
from .kernels import heat_trajectory
from .lattice import Grid
from .lattice import Trajectory
from .lattice import gen_initial_data
from .lattice import make_grid
from .localization import TestFunction
from .localization import window_test_functions
from .norms import NORM_CSV_HEADER
from .norms import energy_budget
from .norms import energy_norm
from .norms import lq_uloc
from .norms import tail_profile
from .norms import usp_norm
from .pressure import PRESSURE_CSV_HEADER
from .pressure import PressureReport
from .pressure import cx0_direct
from .pressure import decomposition_check
from .pressure import pcheck_local
from .pressure import phat_local
from .pressure import pressure_trajectory
from .solver import MildSolveConfig
from .solver import epsilon_family_solve
from .solver import extend_glue
from .solver import integral_equation_defect
from .solver import nonlinearity_array
from .solver import perturb_w
from .solver import residual_check
from .solver import splice_extension
from .storage import read_trajectory
from .storage import sha256_file
from .storage import write_csv
from .storage import write_field
from .storage import write_trajectory

_LOGGER = logging.getLogger(__name__)

STAGES = ("data", "solve", "glue", "pressure", "diagnostics", "extension")

VERIFY_CSV_HEADER = ("condition", "verdict", "value")


def contraction_window(
    eps: float, bound: float, dt: float, T_total: float, c_picard: float
) -> float:
    """Return the longest multiple of 8 dt within min(1, c eps^3 B^-2, T_total)."""
    limit = MildSolveConfig(eps, T_total, dt, c_picard=c_picard).window_limit(bound)
    blocks = math.floor(min(limit, T_total) / (8.0 * dt) + 1e-9)
    window = 8.0 * dt * blocks
    if window < MIN_STEPS * dt - 1e-12:
        raise ValidationError(
            f"dt={dt:g} is too coarse for the contraction window {limit:.6g} at eps={eps:g}; "
            f"need at least {MIN_STEPS} steps"
        )
    return window


def build_test_functions(entries, t_start: float, t_end: float) -> list[TestFunction]:
    """Return bump test functions for configured centers over [t_start, t_end]."""
    return [
        replace(
            window_test_functions(t_start, t_end, [entry[CONF_CENTER]], entry[CONF_RADIUS])[0],
            name=f"tf{n}",
        )
        for n, entry in enumerate(entries)
    ]


class ExperimentCoordinator:
    """Run the configured stages and record every artifact in a manifest."""

    def __init__(self, config: dict[str, Any], output_dir: Path | None = None) -> None:
        """Initialize from a validated config."""
        self.config = config
        self.config_hash = config_hash(config)
        self.output_dir = Path(output_dir or config[CONF_OUTPUT][CONF_DIR])
        self.formats = set(config[CONF_OUTPUT][CONF_FORMATS])
        grid_conf = config[CONF_GRID]
        self.grid: Grid = make_grid(grid_conf[CONF_N], grid_conf[CONF_L])
        self.files: list[Path] = []
        self.completed: list[str] = []
        self.summary: dict[str, Any] = {}
        self.state: dict[str, Any] = {}

    @property
    def eps(self) -> float:
        """Return the primary (smallest) epsilon."""
        return min(self.config[CONF_SOLVER][CONF_EPSILON_LIST])

    def run(self) -> dict[str, Any]:
        """Execute every stage in order; return the manifest."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        marker = self.output_dir / FAILED_MARKER
        if marker.exists():
            marker.unlink()
        for stage in STAGES:
            if stage == "extension" and CONF_EXTENSION not in self.config:
                continue
            _LOGGER.info(f"Stage {stage} started")
            start = time.perf_counter()
            try:
                getattr(self, f"_stage_{stage}")()
            except (UlocflowError, ArithmeticError, ValueError) as err:
                _LOGGER.exception(err)
                marker.write_text(f"{stage}: {err}\n")
                self._write_manifest("failed", stage)
                raise StageFailed(stage, err) from err
            self.completed.append(stage)
            _LOGGER.debug(f"Stage {stage} finished in {time.perf_counter() - start:.2f}s")
        manifest = self._write_manifest("ok")
        _LOGGER.info(f"Run complete, artifacts in {self.output_dir}")
        return manifest

    def _csv(self, name: str, header, rows) -> None:
        if "csv" in self.formats:
            self.files.append(write_csv(self.output_dir / name, header, rows, self.config_hash))

    def _write_manifest(self, status: str, failed_stage: str | None = None) -> dict[str, Any]:
        manifest = {
            "config": self.config,
            "config_sha256": self.config_hash,
            "status": status,
            "failed_stage": failed_stage,
            "stages": self.completed,
            "summary": self.summary,
            "files": [
                {"path": str(path.relative_to(self.output_dir)), "sha256": sha256_file(path)}
                for path in self.files
            ],
        }
        path = self.output_dir / MANIFEST_FILE
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable))
        return manifest

    def _stage_data(self) -> None:
        data = self.config[CONF_DATA]
        v0, w0, u0 = gen_initial_data(data[CONF_KIND], data[CONF_PARAMS], self.grid)
        self.state.update(v0=v0, w0=w0, u0=u0)
        reports = [lq_uloc(v0, 2), lq_uloc(v0, 3), lq_uloc(w0, 2), lq_uloc(u0, 3)]
        for report, label in zip(reports, ("v0", "v0", "w0", "u0")):
            report.name = f"lq_uloc_{label}"
        self._csv("norms.csv", NORM_CSV_HEADER, [r.csv_row() for r in reports])
        if "ulf" in self.formats:
            initial = self.output_dir / "initial"
            initial.mkdir(parents=True, exist_ok=True)
            for name, field in (("v0", v0), ("w0", w0), ("u0", u0)):
                path = initial / f"{name}.ulf"
                write_field(path, field)
                self.files.append(path)
        self.summary["B"] = reports[0].value

    def _stage_solve(self) -> None:
        solver = self.config[CONF_SOLVER]
        v0 = self.state["v0"]
        bound = self.summary["B"]
        window = solver.get(CONF_WINDOW) or contraction_window(
            self.eps, bound, solver[CONF_DT], solver[CONF_T_TOTAL], solver[CONF_C_PICARD]
        )
        eps_list = sorted(solver[CONF_EPSILON_LIST], reverse=True)
        results, distances = epsilon_family_solve(
            v0,
            eps_list,
            window,
            solver[CONF_DT],
            tol=solver[CONF_TOL],
            max_iter=solver[CONF_MAX_ITER],
            c_picard=solver[CONF_C_PICARD],
        )
        rows = []
        for n, result in enumerate(results):
            distance = distances[n] if n < len(distances) else ""
            rows.append(
                [result.config.eps, window, result.iterations, result.contraction, result.bound, distance]
            )
        self._csv(
            "solve.csv",
            ("eps", "window", "iterations", "contraction", "bound", "distance_u33"),
            rows,
        )
        self.state["primary"] = results[-1]
        self.summary["window"] = window
        self.summary["iterations"] = {str(r.config.eps): r.iterations for r in results}
        self.summary["contraction"] = {str(r.config.eps): r.contraction for r in results}

    def _stage_glue(self) -> None:
        T_total = self.config[CONF_SOLVER][CONF_T_TOTAL]
        glue = extend_glue(self.state["primary"], T_total)
        traj = glue.trajectory
        self.state["trajectory"] = traj
        defect = integral_equation_defect(traj, self.state["v0"], self.eps)
        envelope = usp_norm(traj, np.inf, 2.0, 0.0, T_total).value
        rows = [
            [tau, segment.iterations, segment.contraction]
            for tau, segment in zip(glue.seams, glue.segments[1:])
        ]
        self._csv("glue.csv", ("seam", "restart_iterations", "restart_contraction"), rows)
        self.summary.update(seams=glue.seams, integral_defect=defect, linf_l2_uloc=envelope)

    def _stage_pressure(self) -> None:
        traj: Trajectory = self.state["trajectory"]
        pressure = self.config[CONF_PRESSURE]
        p_traj = pressure_trajectory(traj, self.eps)
        self.state["pressure"] = p_traj
        if "ulf" in self.formats:
            self.files.extend(write_trajectory(self.output_dir / "trajectory", traj, p_traj))

        tol = pressure[CONF_TOL_PRESS]
        reports = [decomposition_check(p_traj, traj, x0, self.eps, tol) for x0 in pressure[CONF_CENTERS]]
        self._csv("pressure.csv", PRESSURE_CSV_HEADER, [row for r in reports for row in r.csv_rows()])
        self.state["pressure_reports"] = reports

        origin = phat_local(traj, (0.0, 0.0, 0.0), self.eps, p_traj=p_traj, tol_press=tol)
        rows = []
        for report in reports:
            n = max(1, math.ceil(math.log2(np.linalg.norm(report.x0) + 1.5)))
            if 2.0**n > self.grid.L:
                continue
            direct = cx0_direct(traj, report.x0, n, self.eps)
            average = report.series - origin.series
            rows.extend(
                [*report.x0, t, d, a, abs(d - a)] for t, d, a in zip(traj.times, direct, average)
            )
        self._csv("cx0.csv", ("x0x", "x0y", "x0z", "t", "direct", "average", "difference"), rows)

        w_traj = perturb_w(traj, self.state["u0"])
        V_traj = heat_trajectory(self.state["u0"], traj.times)
        self.state.update(w=w_traj, V=V_traj)
        pchecks = [
            pcheck_local(w_traj, V_traj, x0, pressure[CONF_TAU], self.eps, p_traj, tol)
            for x0 in pressure[CONF_CENTERS]
        ]
        self._csv("pcheck.csv", PRESSURE_CSV_HEADER, [row for r in pchecks for row in r.csv_rows()])
        self.state["pcheck_reports"] = pchecks
        self.summary["pressure_verdicts"] = [r.verdict for r in reports]
        self.summary["pcheck_identity_defect"] = max(
            (float(r.extras["identity_defect"]) for r in pchecks), default=0.0
        )

    def _stage_diagnostics(self) -> None:
        traj: Trajectory = self.state["trajectory"]
        p_traj: Trajectory = self.state["pressure"]
        diagnostics = self.config[CONF_DIAGNOSTICS]
        T_total = self.config[CONF_SOLVER][CONF_T_TOTAL]
        tfs = build_test_functions(diagnostics[CONF_TEST_FUNCTIONS], 0.0, T_total)

        residual = residual_check(traj, p_traj, self.eps, diagnostics[CONF_TOL_WEAK], tfs)
        rows = [
            [tf.name, m, residual.residuals[a, m], residual.scales[a, m]]
            for a, tf in enumerate(tfs)
            for m in range(3)
        ]
        self._csv("residual.csv", ("tf_id", "component", "residual", "scale"), rows)
        self.summary["residual_relative"] = residual.relative

        floor = diagnostics[CONF_LEI_FLOOR]
        reports = []
        for tf in tfs:
            reports.append(lei_eval(traj, p_traj, tf, T_total, self.eps, residual.relative, floor))
            for t0 in diagnostics[CONF_T0_LIST]:
                reports.append(
                    slei_eval(traj, p_traj, tf, t0, T_total, self.eps, residual.relative, floor)
                )
        self._csv("lei.csv", LEI_CSV_HEADER, [r.csv_row() for r in reports])
        w_traj, V_traj = self.state["w"], self.state["V"]
        w_reports = [
            lei_w_eval(
                w_traj, V_traj, traj, p_traj, tf, T_total, self.eps, None, residual.relative, floor
            )
            for tf in tfs
        ]
        self._csv("lei_w.csv", LEI_CSV_HEADER, [r.csv_row() for r in w_reports])
        self.summary["lei_verdicts"] = [r.verdict for r in reports + w_reports]

        threshold = diagnostics[CONF_THRESHOLD]
        if diagnostics[CONF_R_LIST] and diagnostics[CONF_T_LIST]:
            R_list = sorted(diagnostics[CONF_R_LIST])
            decay = decay_monitor(w_traj, self.state["w0"], R_list, diagnostics[CONF_T_LIST])
            self._csv("decay.csv", DECAY_CSV_HEADER, decay.csv_rows())
            final = w_traj.snapshot(len(w_traj) - 1)
            tails = tail_profile(final, 2.0, R_list, threshold)
            rows = [[R, value, tails.verdict] for R, value in zip(tails.R, tails.values)]
            self._csv("tails.csv", ("R", "value", "verdict"), rows)
            self.summary.update(decay_C0=decay.C0, decay_slope=decay.slope)
        if diagnostics[CONF_PROBES]:
            t0 = min(diagnostics[CONF_T_LIST], default=self.config[CONF_SOLVER][CONF_DT])
            profile = gradV_decay_profile(
                self.state["u0"], t0, diagnostics[CONF_PROBES], threshold=threshold
            )
            self._csv("gradv.csv", GRADV_CSV_HEADER, profile.csv_rows())
            self.summary["gradv_ratio"] = profile.ratio
        pchecks: list[PressureReport] = sorted(
            self.state["pcheck_reports"], key=lambda r: float(np.linalg.norm(r.x0))
        )
        if pchecks:
            ep = ep_membership_profile(w_traj, pchecks, threshold=threshold)
            self._csv("ep_profile.csv", EP_CSV_HEADER, ep.csv_rows())

    def _stage_extension(self) -> None:
        extension = self.config[CONF_EXTENSION]
        traj: Trajectory = self.state["trajectory"]
        t0 = float(traj.times[-1])
        splice = splice_extension(
            traj,
            self.state["u0"],
            t0,
            extension[CONF_WINDOW],
            self.eps,
            extension[CONF_DELTA],
            extension[CONF_RADIUS],
        )
        h, w = splice.h_state, splice.w_result
        self._csv(
            "extension.csv",
            (
                "t0", "S", "h_norm", "fitted_C", "iterations", "contraction",
                "energy_defect", "gronwall_C", "M1", "verdict",
            ),
            [[t0, h.S, h.f_norm, h.fitted_C, h.iterations, h.contraction,
              w.energy_defect, w.gronwall_C, w.M1, w.verdict]],
        )
        self.summary["extension_verdict"] = w.verdict


@dataclass
class VerifyReport:
    """Per-condition verdicts of a local energy solution check."""

    conditions: dict[str, tuple[str, float]]

    @property
    def passed(self) -> bool:
        """Return whether every condition passed."""
        return all(verdict == PASS for verdict, _ in self.conditions.values())

    def csv_rows(self) -> list[list]:
        """Return one (condition, verdict, value) row per condition."""
        return [[name, verdict, value] for name, (verdict, value) in self.conditions.items()]


def verify_solution(
    solution_dir: Path, config: dict[str, Any], eps: float | None = None
) -> VerifyReport:
    """Check the five defining conditions on a stored (v, p) pair.

    ``eps`` defaults to the epsilon recorded with the trajectory; None there means the
    unmollified equations.
    """
    v_traj, p_traj = read_trajectory(solution_dir)
    if p_traj is None:
        raise ValidationError(f"{solution_dir} carries no pressure files")
    if eps is None:
        eps = v_traj.epsilon
    diagnostics = config[CONF_DIAGNOSTICS]
    t0, t1 = float(v_traj.times[0]), float(v_traj.times[-1])
    tfs = build_test_functions(diagnostics[CONF_TEST_FUNCTIONS], t0, t1)

    residual = residual_check(v_traj, p_traj, eps, diagnostics[CONF_TOL_WEAK], tfs)
    energy = energy_norm(v_traj, t0, t1).value
    identity = np.eye(3)[:, :, None, None, None]
    budget = energy_budget(
        v_traj,
        lambda n: nonlinearity_array(v_traj.data[n], v_traj.grid, eps) + identity * p_traj.data[n],
        t0,
        t1,
        diagnostics[CONF_ENERGY_BUDGET],
    )
    centers = [tf[CONF_CENTER] for tf in diagnostics[CONF_TEST_FUNCTIONS]]
    continuity = weak_continuity_probe(v_traj, centers, threshold=diagnostics[CONF_THRESHOLD])
    lei = [
        lei_eval(v_traj, p_traj, tf, t1, eps, residual.relative, diagnostics[CONF_LEI_FLOOR])
        for tf in tfs
    ]
    pressure = config[CONF_PRESSURE]
    decompositions = [
        decomposition_check(p_traj, v_traj, x0, eps, pressure[CONF_TOL_PRESS])
        for x0 in pressure[CONF_CENTERS]
    ]

    def combined(verdicts) -> str:
        return PASS if all(v == PASS for v in verdicts) else FAIL

    conditions = {
        "weak_form": (residual.verdict, residual.relative),
        "energy_bound": (PASS if energy <= budget else FAIL, energy),
        "weak_continuity": (continuity.verdict, float(np.max(continuity.distances))),
        "local_energy": (combined(r.verdict for r in lei), min((r.slack for r in lei), default=0.0)),
        "pressure_decomposition": (
            combined(r.verdict for r in decompositions),
            max((r.max_variance for r in decompositions), default=0.0),
        ),
    }
    for name, (verdict, value) in conditions.items():
        log = _LOGGER.warning if verdict == FAIL else _LOGGER.info
        log(f"Condition {name}: {verdict} ({value:.6g})")
    return VerifyReport(conditions)


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
