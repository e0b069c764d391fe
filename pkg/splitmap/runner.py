"""Run orchestration: one scenario, one artifact directory, one manifest."""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import get_settings
from .diagnostics import energy_decay_ratio, singular_set_detect, static_monotonicity_curve, struwe_curve
from .elliptic import AdmissibleProblem, flux_residual, minimize
from .errors import SplitmapError
from .grid import CoupledField, discrete_energy
from .models import RunKind, RunManifest, Scenario, ValidationReport
from .parabolic import energy_inequality_check, evolve, initial_flux_compatibility, picard_chart_solve
from .parabolic.flow import Trajectory
from .scenarios import build_problem, initial_field
from .storage import RunStorage, read_field

logger = logging.getLogger(__name__)


def config_hash(scenario: Scenario) -> str:
    payload = json.dumps(scenario.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def _versions() -> dict[str, str]:
    versions = {"splitmap": __version__}
    for pkg in ("numpy", "scipy", "pydantic", "pydantic-settings"):
        try:
            versions[pkg] = version(pkg)
        except PackageNotFoundError:
            versions[pkg] = "unknown"
    return versions


class ScenarioRunner:
    """Executes the pipeline named by `scenario.kind` and writes its artifacts."""

    def __init__(self, scenario: Scenario, out_dir: Optional[str] = None, threads: Optional[int] = None):
        settings = get_settings()
        self.scenario = scenario
        self.threads = max(1, threads or settings.threads)
        root = out_dir or scenario.output_dir or str(Path(settings.output_dir) / scenario.name)
        self.storage = RunStorage(root)
        self.constants: dict[str, float] = {}
        self.rng = np.random.default_rng(scenario.seed)
        self._problem: Optional[AdmissibleProblem] = None

    @property
    def problem(self) -> AdmissibleProblem:
        if self._problem is None:
            self._problem = build_problem(self.scenario)
        return self._problem

    @property
    def dt(self) -> float:
        flow = self.scenario.flow
        if flow.dt is not None:
            return flow.dt
        factor = flow.stability_factor or get_settings().stability_factor
        return factor * self.problem.grid.spacing ** 2

    def validate(self) -> ValidationReport:
        """Interface matching of g at the Σ-edge, data on targets, initial flux for flows."""
        problem = self.problem
        tol = problem.constraint_tol
        violations = problem.compatibility_violations()
        residual = problem.compatibility_residual()
        distance = problem.boundary_on_targets()
        warnings = []
        flux = None
        if self.scenario.kind in (RunKind.flow, RunKind.picard):
            try:
                u0 = initial_field(self.scenario, problem)
                flux = initial_flux_compatibility(problem, u0).max_norm()
            except SplitmapError as exc:
                warnings.append(f"Initial field unavailable: {exc.message}")
            if flux is not None and flux > tol:
                warnings.append(f"Initial data are not flux compatible at the interface (max {flux:.3e})")
        report = ValidationReport(
            ok=not violations and distance <= tol,
            compatibility_residual=residual,
            violations=[{"node": list(v.node), "magnitude": v.magnitude} for v in violations],
            boundary_distance=distance,
            flux_compatibility=flux,
            warnings=warnings,
        )
        for message in warnings:
            logger.warning(message)
        return report

    def run(self, seed_field: Optional[CoupledField] = None) -> RunManifest:
        problem = self.problem
        for pair in (problem.plus, problem.minus):
            pair.validate(self.rng)
        kind = self.scenario.kind
        logger.info(f"Running '{self.scenario.name}' ({kind.value}) into {self.storage.root}")
        if kind == RunKind.minimize:
            self._run_minimize(seed_field)
        elif kind == RunKind.flow:
            self._run_flow(seed_field)
        elif kind == RunKind.picard:
            self._run_picard(seed_field)
        else:
            self._run_diagnose(seed_field)
        return self._write_manifest()

    def diagnose(self, u: Optional[CoupledField] = None) -> RunManifest:
        """Post-hoc diagnostics of a saved field regardless of the scenario kind."""
        self._run_diagnose(u)
        return self._write_manifest()

    def _run_minimize(self, seed_field: Optional[CoupledField]) -> None:
        problem = self.problem
        u0 = initial_field(self.scenario, problem, seed_field)
        u, ledger = minimize(problem, u0, self.scenario.minimize)
        self.storage.write_csv("descent.csv", [r.__dict__ for r in ledger.records],
                               ["iteration", "energy", "step", "stationarity"])
        self._write_field(u)
        self.constants.update({
            "energy": discrete_energy(u),
            "iterations": float(len(ledger.records) - 1),
            "converged": float(ledger.converged),
            "flux_residual": flux_residual(problem, u).max_norm(),
        })
        self._diagnose(u)

    def _run_flow(self, seed_field: Optional[CoupledField]) -> None:
        problem = self.problem
        opts = self.scenario.flow
        u0 = initial_field(self.scenario, problem, seed_field)
        flux = initial_flux_compatibility(problem, u0).max_norm()
        if flux > problem.constraint_tol:
            logger.warning(f"Initial data are not flux compatible (max {flux:.3e}); the flow is not "
                           f"expected to be smooth up to t = 0")
        factor = opts.stability_factor or get_settings().stability_factor
        trajectory, ledger = evolve(problem, u0, self.dt, opts.t_end, opts.stride, factor,
                                    opts.energy_constant)
        self.storage.write_csv("ledger.csv", [s.__dict__ for s in ledger.samples],
                               ["time", "energy", "dissipation", "slack"])
        self._write_frames(trajectory)
        self._write_field(trajectory.final)
        slack = energy_inequality_check(ledger, tol_constant=opts.tol_constant,
                                        h=problem.grid.spacing, dt=self.dt)
        self.storage.write_json("energy_check.json", slack.as_dict())
        self.constants.update({
            "initial_flux": flux,
            "final_energy": ledger.samples[-1].energy,
            "min_slack": slack.min_slack,
            "identity_residual": slack.identity_residual,
        })
        self._struwe(trajectory)
        self._diagnose(trajectory.final)

    def _run_picard(self, seed_field: Optional[CoupledField]) -> None:
        problem = self.problem
        u0 = initial_field(self.scenario, problem, seed_field)
        result = picard_chart_solve(problem, u0, self.scenario.picard, dt=self.scenario.picard.dt or self.dt,
                                    stride=self.scenario.flow.stride)
        rows = []
        previous = None
        for i, diff in enumerate(result.differences, start=1):
            ratio = diff / previous if previous else float("nan")
            rows.append({"sweep": i, "difference": diff, "ratio": ratio})
            previous = diff
        self.storage.write_csv("picard.csv", rows, ["sweep", "difference", "ratio"])
        self._write_frames(result.trajectory)
        self._write_field(result.trajectory.final)
        self.constants.update({
            "contraction_ratio": result.contraction_ratio,
            "sweeps": float(result.sweeps),
            "residual": result.residual,
            "recenters": float(result.recenters),
        })

    def _run_diagnose(self, seed_field: Optional[CoupledField]) -> None:
        u = seed_field
        if u is None:
            if not self.scenario.field_path:
                raise SplitmapError("Diagnose runs need a saved field (--field or field_path)")
            u = read_field(self.scenario.field_path, self.problem.grid)
        self.constants["energy"] = discrete_energy(u)
        self._diagnose(u)

    def _write_field(self, u: CoupledField, name: str = "field.csv") -> None:
        """Field CSV plus the grid metadata needed to read it back."""
        self.storage.write_field(u, name)
        self.storage.write_json(str(Path(name).parent / "grid.json"), u.grid.to_dict())

    def _write_frames(self, trajectory: Trajectory) -> None:
        for k, fld in enumerate(trajectory.fields):
            self.storage.write_field(fld, f"frames/frame_{k:05d}.csv")
        self.storage.write_csv("frames/times.csv", [{"frame": k, "time": t} for k, t in enumerate(trajectory.times)],
                               ["frame", "time"])
        if trajectory.fields:
            self.storage.write_json("frames/grid.json", trajectory.fields[0].grid.to_dict())

    def _centers(self) -> list[np.ndarray]:
        centers = self.scenario.diagnostics.centers
        dim = self.problem.grid.dim
        if not centers:
            return [np.zeros(dim)]
        return [np.asarray(c, dtype=float) for c in centers]

    def _diagnose(self, u: CoupledField) -> None:
        opts = self.scenario.diagnostics
        centers = self._centers()

        def curve(center):
            return static_monotonicity_curve(u, center, opts.radii, opts.distortion_constant)

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            curves = list(pool.map(curve, centers))
        rows = [row for c in curves for row in c.rows()]
        self.storage.write_csv("monotonicity.csv", rows, ["center", "r", "value", "deficit", "violation"])
        self.constants["monotonicity_violation"] = max(c.violation for c in curves)

        radius = opts.detector_radius or 4 * u.grid.spacing
        regularity = singular_set_detect(u, radius, opts.epsilon0)
        reg_rows = regularity.rows()
        self.storage.write_csv("regularity.csv", reg_rows,
                               [f"x{i}" for i in range(u.grid.dim)] + ["r", "energy", "flagged", "gamma", "holder"])
        self.constants["flagged_nodes"] = float(np.count_nonzero(regularity.flagged))
        ratios = [energy_decay_ratio(u, c, opts.radii[-1], opts.theta) for c in centers]
        self.constants["decay_ratio"] = max(ratios)

    def _struwe(self, trajectory: Trajectory) -> None:
        radii = self.scenario.diagnostics.struwe_radii
        if not radii:
            return
        t0 = trajectory.times[-1]
        rows = []
        for center in self._centers():
            quantity = struwe_curve(trajectory, center, t0, radii)
            label = " ".join(f"{c:.6g}" for c in center)
            rows.extend({"center": label, **row} for row in quantity.rows())
            self.constants["struwe_violation"] = max(self.constants.get("struwe_violation", 0.0),
                                                     quantity.violation)
        self.storage.write_csv("struwe.csv", rows)

    def _write_manifest(self) -> RunManifest:
        manifest = RunManifest(
            scenario=self.scenario.model_dump(mode="json"),
            config_hash=config_hash(self.scenario),
            versions=_versions(),
            constants={k: float(v) for k, v in sorted(self.constants.items())},
            artifacts=sorted(self.storage.artifacts + ["manifest.json"]),
        )
        self.storage.write_json("manifest.json", manifest.model_dump(mode="json"))
        logger.info(f"Run '{self.scenario.name}' finished: {len(manifest.artifacts)} artifacts")
        return manifest
