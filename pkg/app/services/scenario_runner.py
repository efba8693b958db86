"""
Scenario Runner

Executes one RunConfig end to end: builds the model, runs the requested
solvers, derives reduced states and optional kernel / correlation / map data,
and writes every artifact plus a run manifest into the output directory.
"""

import hashlib
import logging
import platform
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pydantic
import scipy

from app.core.config import get_settings
from app.schemas.dynamics import SolverKind, Trajectory
from app.schemas.run_config import RunConfig, RunSolver, RunSummary
from app.services import export
from app.services.config_parser import config_digest_payload, materialize
from app.services.kernel_service import correlations, kernel_table
from app.services.reduced_dynamics import MapBuilder, choi_matrix, cptp_check, reduced_trajectory
from app.services.solver_service import SectorSolver
from app.services.spin_boson import asymptotic_population, is_spinboson, sector_weights

logger = logging.getLogger(__name__)


class ScenarioRunner:
    """One scenario run: the built model, its solver and the files written so far."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.settings = get_settings()
        self.timings: Dict[str, float] = {}
        self.files: List[str] = []
        self.trajectories: Dict[str, Trajectory] = {}

        started = time.perf_counter()
        self.model, self.initial = materialize(cfg)
        self.timings["build"] = time.perf_counter() - started

        self.solver = SectorSolver(self.model)
        self.dt = cfg.run.dt if cfg.run.dt is not None else self.settings.DEFAULT_DT
        if cfg.run.times is not None:
            self.times = np.asarray(cfg.run.times, dtype=float)
        else:
            self.times = np.linspace(0.0, cfg.run.T, cfg.run.n_samples)
        self.out_dir: Optional[Path] = None

    def run(self) -> RunSummary:
        """
        Run the scenario and write its artifacts.

        Returns:
            RunSummary: Output directory, written files and headline numbers

        Raises:
            ModelError, NumericalError: From the solvers
            OutputError: If the output directory or a file cannot be written
        """
        cfg, model = self.cfg, self.model
        started = time.perf_counter()
        self.out_dir = export.ensure_directory(cfg.output.directory or str(Path(self.settings.OUTPUT_DIR) / cfg.name))
        logger.info(f"Running scenario '{cfg.name}' (d={model.d}, N={model.n_modes}, dt={self.dt:g}) into {self.out_dir}")

        for solver in _solvers(cfg.run.solver):
            self._run_solver(solver)

        deviation = None
        if cfg.run.solver == RunSolver.BOTH:
            deviation = self._deviation_summary(self.trajectories["direct"], self.trajectories["volterra"])
            self._write_json("deviation", deviation)

        if cfg.output.kernels:
            header, rows = export.kernel_rows(kernel_table(model, self.initial, self.times))
            self._write_csv("kernels", header, rows)

        if cfg.output.correlations:
            header, rows = export.correlation_rows(correlations(model, self.initial, self.times))
            self._write_csv("correlations", header, rows)

        cptp_passed = None
        if cfg.output.cptp:
            stage = time.perf_counter()
            cptp_passed = self._write_maps()
            self.timings["cptp"] = time.perf_counter() - stage

        self.timings["total"] = self.timings["build"] + time.perf_counter() - started
        norm_drift = {name: t.norm_drift for name, t in self.trajectories.items() if t.norm_drift is not None}
        self._write_json("manifest", self._manifest(norm_drift, deviation, cptp_passed))

        logger.info(f"Scenario '{cfg.name}' finished in {self.timings['total']:.2f}s, {len(self.files)} files")
        return RunSummary(
            name=cfg.name,
            output_dir=str(self.out_dir),
            files=self.files,
            norm_drift=norm_drift,
            max_deviation=deviation["max_abs_c"] if deviation else None,
            cptp_passed=cptp_passed,
        )

    def _run_solver(self, solver: SolverKind) -> None:
        stage = time.perf_counter()
        if solver == SolverKind.DIRECT:
            trajectory = self.solver.direct(self.initial, self.times, self.dt)
        elif solver == SolverKind.VOLTERRA:
            trajectory = self.solver.volterra_with_modes(self.initial, self.times, self.dt)
        else:
            trajectory = self.solver.exact(self.initial, self.times)
        self.timings[solver.value] = time.perf_counter() - stage
        self.trajectories[solver.value] = trajectory

        reduced = reduced_trajectory(self.model, trajectory) if self.cfg.output.reduced else None
        weights = sector_weights(self.model, trajectory) if self.model.d == 2 else None
        header, rows = export.trajectory_rows(self.model, trajectory, reduced, weights, self.cfg.output.modes)
        self._write_csv(solver.value, header, rows)

    def _deviation_summary(self, first: Trajectory, second: Trajectory) -> Dict[str, float]:
        rho_first = np.array([r.rho for r in reduced_trajectory(self.model, first)])
        rho_second = np.array([r.rho for r in reduced_trajectory(self.model, second)])
        summary = {
            "max_abs_c": float(np.max(np.abs(first.c - second.c))),
            "max_abs_rho": float(np.max(np.abs(rho_first - rho_second))),
            "max_abs_norm": float(np.max(np.abs(first.norms - second.norms))),
        }
        logger.info(f"Direct vs volterra: max|dc|={summary['max_abs_c']:.3e}")
        return summary

    def _write_maps(self) -> bool:
        cfg = self.cfg
        n = cfg.output.cptp_samples
        times = np.linspace(0.0, cfg.run.T, n) if n > 1 else np.array([cfg.run.T])
        maps = MapBuilder(self.model, self.dt, method=cfg.output.map_method).maps(times)

        reports, payloads = [], []
        for dyn_map in maps:
            choi = choi_matrix(dyn_map)
            reports.append(cptp_check(choi).to_json_dict())
            payloads.append(export.map_payload(dyn_map, choi))
        passed = all(r["verdict"] == "PASS" for r in reports)

        self._write_json(
            "cptp", {"method": cfg.output.map_method, "verdict": "PASS" if passed else "FAIL", "reports": reports}
        )
        self._write_json("maps", payloads)
        return passed

    def _manifest(self, norm_drift: Dict[str, float], deviation: Optional[Dict[str, float]],
                  cptp_passed: Optional[bool]) -> Dict:
        cfg, model, settings = self.cfg, self.model, self.settings
        spinboson = is_spinboson(model)
        manifest = {
            "name": cfg.name,
            "config_sha256": hashlib.sha256(config_digest_payload(cfg).encode("utf-8")).hexdigest(),
            "versions": {
                settings.PROJECT_NAME: settings.VERSION,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pydantic": pydantic.VERSION,
            },
            "model": {"d": model.d, "n_modes": model.n_modes, "spin_boson": spinboson},
            "run": {"dt": self.dt, "n_times": int(self.times.size), "T": float(self.times[-1]),
                    "solvers": list(self.trajectories)},
            "norm_drift": norm_drift,
            "max_deviation": deviation,
            "cptp_passed": cptp_passed,
            "timings_seconds": self.timings,
            "files": self.files + [f"{cfg.name}_manifest.json"],
        }
        if spinboson:
            report = asymptotic_population(model, self.initial)
            manifest["asymptotics"] = {
                "predicted_rho00_limit": report.predicted_limit,
                "kernel_half_life": report.kernel_half_life if np.isfinite(report.kernel_half_life) else None,
                "recurrence_time": report.recurrence_time if np.isfinite(report.recurrence_time) else None,
                "approachable": report.approachable,
            }
        return manifest

    def _write_csv(self, suffix: str, header: List[str], rows: List[List[float]]) -> None:
        path = export.write_csv(self.out_dir / f"{self.cfg.name}_{suffix}.csv", header, rows)
        self.files.append(path.name)

    def _write_json(self, suffix: str, payload) -> None:
        path = export.write_json(self.out_dir / f"{self.cfg.name}_{suffix}.json", payload)
        self.files.append(path.name)


def run_scenario(cfg: RunConfig) -> RunSummary:
    """
    Run a scenario and write its artifacts.

    Raises:
        ConfigError: If the model or initial state cannot be built
        ModelError, NumericalError: From the solvers
        OutputError: If the output directory or a file cannot be written
    """
    return ScenarioRunner(cfg).run()


def _solvers(choice: RunSolver) -> List[SolverKind]:
    if choice == RunSolver.BOTH:
        return [SolverKind.DIRECT, SolverKind.VOLTERRA]
    return [SolverKind(choice.value)]
