"""
Subcommand orchestration: turns a RunConfig into a result document and table.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd

from Utils import constants
from Utils.config import RunConfig
from Utils.errors import InsufficientDataError, PreconditionError
from services.dynamics_service import Nonlinearity, WaveField, dynamics_service
from services.export_service import ExportService
from services.linear_service import ModelParams, linear_service
from services.stationary_service import Branch, StationaryState, stationary_service

logger = logging.getLogger(__name__)

BIFURCATION_COLUMNS = ["n", "eta_n", "Omega_n", "p", "lambda_prime", "ell"]


@dataclass
class ExperimentOutcome:
    """What a subcommand produced."""

    result: Dict[str, Any]
    table: Optional[pd.DataFrame] = None
    columns: Optional[List[str]] = None
    halted: bool = False
    extra_files: List[str] = field(default_factory=list)


class ExperimentService:
    """One method per CLI subcommand."""

    def __init__(self, exporter: Optional[ExportService] = None):
        self.exporter = exporter or ExportService()

    @staticmethod
    def params_of(config: RunConfig) -> ModelParams:
        return ModelParams(a=config.a, alpha=config.alpha)

    def run(self, config: RunConfig) -> ExperimentOutcome:
        handlers = {
            "spectrum": self.spectrum,
            "stationary": self.stationary,
            "bifurcation": self.bifurcation,
            "evolve": self.evolve,
            "dispersive-check": self.dispersive_check,
            "figure1": self.figure1,
        }
        logger.info(f"🔍 Running {config.subcommand}")
        return handlers[config.subcommand](config)

    # ------------------------------------------------------------------

    def spectrum(self, config: RunConfig) -> ExperimentOutcome:
        params = self.params_of(config)
        spectral = linear_service.bound_state(params)
        result: Dict[str, Any] = spectral.to_dict()
        result["branches"] = linear_service.branch_admissibility(params).to_dict()
        if spectral.has_bound_state:
            result["eigenfunction_bounds"] = linear_service.eigenfunction_bounds_check(params).to_dict()
        return ExperimentOutcome(result=result, table=pd.DataFrame([spectral.to_dict()]))

    def _solve_states(self, config: RunConfig, regime: str) -> List[StationaryState]:
        params = self.params_of(config)
        ells = [config.ell] if config.ell is not None else ([1, 2] if regime == "focusing" else [2])
        p_grid = stationary_service.default_p_grid(regime, config.p_points)
        states: List[StationaryState] = []
        for ell in ells:
            states.extend(stationary_service.solve_branch(regime, ell, params, p_grid=p_grid,
                                                          lambda_max=config.lambda_max))
        return states

    @staticmethod
    def _slope_rows(branches: List[Branch]) -> List[Dict[str, Any]]:
        rows = []
        for branch in branches:
            try:
                entries = stationary_service.stability_slope(branch.states)
            except InsufficientDataError:
                entries = [{"state": s, "slope": float("nan"), "classification": "insufficient-data"}
                           for s in branch.states]
            for entry in entries:
                row = entry["state"].to_row()
                row.update(slope=entry["slope"], classification=entry["classification"], branch_label=branch.label)
                rows.append(row)
        return rows

    def stationary(self, config: RunConfig) -> ExperimentOutcome:
        regime = config.regime
        states = self._solve_states(config, regime)
        branches = stationary_service.assemble_branches(states)
        rows = self._slope_rows(branches)
        rows.sort(key=lambda r: (r["ell"], r["Omega"], r["p"]))

        outcome = ExperimentOutcome(
            result={
                "regime": regime,
                "count": len(rows),
                "states": rows,
                "branches": [{"label": b.label, "size": len(b.states)} for b in branches],
                "eta_turning_points": stationary_service.eta_turning_points(branches),
                "slope_note": constants.SLOPE_NOTE,
            },
            table=pd.DataFrame(rows, columns=constants.STATIONARY_COLUMNS),
            columns=constants.STATIONARY_COLUMNS,
        )

        if config.snapshot_path and states:
            ground = min(states, key=lambda s: s.mu_sq)
            snapshot = WaveField.from_function(lambda x: ground.profile(x) / math.sqrt(ground.mu_sq),
                                               config.a, config.effective_L, config.dx)
            self.exporter.write_csv(config.snapshot_path, config.to_echo(), snapshot.to_frame(),
                                    constants.SNAPSHOT_COLUMNS)
            outcome.extra_files.append(config.snapshot_path)
        return outcome

    def bifurcation(self, config: RunConfig) -> ExperimentOutcome:
        params = self.params_of(config)
        points = stationary_service.find_bifurcations(config.regime, config.ell, params)
        if config.n is not None:
            points = points[:config.n]
        listed = []
        for point in points:
            entry = point.to_dict()
            counts = stationary_service.fold_root_counts(point, params)
            entry["fold_root_counts"] = {"below": counts.below, "above": counts.above,
                                         "delta": counts.delta, "changes_by_two": counts.changes_by_two}
            listed.append(entry)
        frame = pd.DataFrame([p.to_dict() for p in points], columns=BIFURCATION_COLUMNS)
        return ExperimentOutcome(result={"regime": config.regime, "points": listed},
                                 table=frame, columns=BIFURCATION_COLUMNS)

    def evolve(self, config: RunConfig) -> ExperimentOutcome:
        params = self.params_of(config)
        nl = Nonlinearity(eta=config.eta, sigma=config.sigma)
        psi0 = dynamics_service.make_initial_field(
            config.psi0_kind, params, config.effective_L, config.dx,
            center=config.psi0_center, width=config.psi0_width, momentum=config.psi0_momentum,
            path=config.psi0_file, renormalize=config.renormalize,
        )
        verdict = dynamics_service.classify_blowup(params, nl, psi0, probe=False)
        trajectory = dynamics_service.evolve(psi0, params, nl, config.t_final, dt=config.dt,
                                             q=config.effective_q, observer_stride=config.observers_stride,
                                             renormalize=config.renormalize)
        if trajectory.halted:
            verdict.numerical_blowup = True
            verdict.T_max_estimate = trajectory.t_max_estimate
            verdict.rules.append("numerical-blowup-detected")

        frame = trajectory.to_frame()
        first, last = trajectory.records[0], trajectory.records[-1]
        result = {
            "trajectory": trajectory.summary(),
            "verdict": verdict.to_dict(),
            "norm_drift": abs(last.norm_sq - first.norm_sq),
            "energy_drift": abs(last.energy - first.energy),
            "initial_energy": first.energy,
        }
        outcome = ExperimentOutcome(result=result, table=frame, columns=constants.DIAGNOSTICS_COLUMNS,
                                    halted=trajectory.halted)
        if config.snapshot_path:
            self.exporter.write_csv(config.snapshot_path, config.to_echo(), trajectory.final.to_frame(),
                                    constants.SNAPSHOT_COLUMNS)
            outcome.extra_files.append(config.snapshot_path)
        return outcome

    def dispersive_check(self, config: RunConfig) -> ExperimentOutcome:
        params = self.params_of(config)
        report = linear_service.dispersive_check(params, times=config.times, backend=config.backend)
        result = {
            "dispersive": report.to_dict(),
            "ia_bound": linear_service.ia_bound_report(params.a).to_dict(),
            "q_bounds": linear_service.q_bounds_check(params).to_dict(),
        }
        return ExperimentOutcome(result=result, table=pd.DataFrame(report.rows, columns=constants.DISPERSIVE_COLUMNS),
                                 columns=constants.DISPERSIVE_COLUMNS)

    def figure1(self, config: RunConfig) -> ExperimentOutcome:
        frame, points = self.figure1_dataset(config)
        result = {
            "rows": frame.to_dict(orient="records"),
            "bifurcations": [p.to_dict() for p in points],
        }
        return ExperimentOutcome(result=result, table=frame, columns=constants.FIGURE1_COLUMNS)

    def figure1_dataset(self, config: RunConfig):
        """
        (branch_label, eta, Omega) rows of the focusing branches over [eta_min, 0].

        Bifurcation points are appended as rows labelled bifurcationN.
        """
        params = self.params_of(config)
        if config.regime != "focusing":
            raise PreconditionError("The branch diagram is built for the focusing regime (g = -1)")
        states = self._solve_states(config, "focusing")
        branches = stationary_service.assemble_branches(states)
        eta_max = constants.FIGURE1_ETA_RANGE[1]

        rows = []
        for branch in branches:
            seen = set()
            for state in sorted(branch.states, key=lambda s: s.eta):
                if not (config.eta_min <= state.eta <= eta_max) or state.eta in seen:
                    continue
                seen.add(state.eta)
                rows.append({"branch_label": branch.label, "eta": state.eta, "Omega": state.Omega})

        points = stationary_service.find_bifurcations("focusing", None, params)
        for point in points:
            if config.eta_min <= point.eta_n <= eta_max:
                rows.append({"branch_label": f"bifurcation{point.n}", "eta": point.eta_n, "Omega": point.Omega_n})

        frame = pd.DataFrame(rows, columns=constants.FIGURE1_COLUMNS)
        logger.info(f"✅ Branch diagram: {len(frame)} rows, {len(branches)} branches, {len(points)} folds")
        return frame, points

    def emit_figure1_dataset(self, config: RunConfig, path: str) -> str:
        """Write the branch diagram CSV to path."""
        frame, _ = self.figure1_dataset(config)
        self.exporter.write_csv(path, config.to_echo(), frame, constants.FIGURE1_COLUMNS)
        return path


# Default service instance
experiment_service = ExperimentService()
