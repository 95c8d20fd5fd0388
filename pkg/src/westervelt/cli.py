"""Command-line runner: simulation, estimate checks, certificates, oracles, MMS and sweeps.

Every run writes ``summary.txt`` into the output directory; aborted runs also write
``error.json``. Exit status: 0 when no check failed, 1 on a failed check or solver
non-convergence, 2 on an invalid scenario or configuration, 3 on a degeneracy abort.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Mapping

import yaml

from .analysis import (FORMULATION_OF, ConstantsTable, degeneracy_margin, energy_report,
                       estimate_constants, fit_cbar, linf_bound, smallness_certificate)
from .errors import DegeneracyError, InvalidArgument, NonConvergence, StepFailure
from .evolution import Setup, Trajectory, prepare, solve_nonlinear_monolithic
from .fixedpoint import BallSpec, IterationLog, ball_membership, picard_solve
from .manufactured import spatial_study, temporal_study
from .parameters import Formulation, ScenarioSpec, load_scenario, scenario_from_dict, set_dotted
from .reporting import (Check, emit_summary, write_csv, write_error, write_iterations, write_kv,
                        write_norms, write_records, write_trajectory)

log = logging.getLogger("westervelt")

MODES = ("simulate", "check-estimates", "certify", "oracle-compare", "mms", "sweep")
DEFAULT_TOLERANCES = {"oracle": 1e-8, "order_min": 1.9, "order_max": 2.1}
_SOLVER_TOLERANCES = ("picard_tol", "newton_tol")
_CONSTANTS = tuple(f.name for f in fields(ConstantsTable) if f.name not in ("q", "metadata"))
_OPTIONAL_TOLERANCES = ("cbar", *_SOLVER_TOLERANCES, *_CONSTANTS)
EXIT_CODES = {"pass": 0, "inconclusive": 0, "fail": 1, "degenerate": 3}
EXIT_INVALID = 2


@dataclass(frozen=True)
class RunConfig:
    scenario: Path
    out: Path
    mode: str = "simulate"
    seed: int = 0
    workers: int = 1
    tolerances: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.workers < 1:
            raise InvalidArgument("--workers must be >= 1")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES) - set(_OPTIONAL_TOLERANCES)
        if unknown:
            raise InvalidArgument(f"unknown tolerances {sorted(unknown)}; known: "
                                  f"{sorted(DEFAULT_TOLERANCES) + list(_OPTIONAL_TOLERANCES)}")

    def tol(self, name: str) -> float | None:
        return self.tolerances.get(name, DEFAULT_TOLERANCES.get(name))


@dataclass
class _Run:
    """State shared by the steps of one mode."""

    spec: ScenarioSpec
    out: Path
    config: RunConfig
    setup: Setup = None
    checks: list[Check] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    _constants: ConstantsTable | None = None

    def __post_init__(self):
        self.setup = prepare(self.spec)

    def constants(self) -> ConstantsTable:
        if self._constants is None:
            overrides = {k: v for k, v in self.config.tolerances.items() if k in _CONSTANTS}
            self._constants = estimate_constants(self.setup.mesh, float(self.setup.material.q),
                                                 seed=self.config.seed, overrides=overrides)
            write_kv(self.out / "constants.txt",
                     [*self._constants.as_dict().items(),
                      *((f"method.{k}", v) for k, v in self._constants.metadata.items())])
        return self._constants

    def simulate(self) -> tuple[Trajectory, IterationLog]:
        traj, it = picard_solve(self.setup)
        write_trajectory(self.out / "trajectory.csv", traj)
        write_norms(self.out / "norms.csv", traj, float(self.setup.material.q))
        write_iterations(self.out / "iterations.csv", it)
        self.checks.append(Check("fixed_point", "pass",
                                 f"{len(it)} iterations, last step {it.distances[-1]:.3e}"))
        m = self.setup.material
        k = m.k_tilde if self.setup.formulation is Formulation.W3 else m.k
        margin = degeneracy_margin(traj, self.setup.formulation, k)
        self.extra.update({"picard_iterations": len(it), "degeneracy_margin": margin.value,
                           "degeneracy_margin.step": margin.step,
                           "degeneracy_margin.node": margin.node})
        return traj, it


# ---------------------------------------------------------------- modes


def _mode_simulate(run: _Run) -> None:
    run.simulate()


def _estimate_reports(run: _Run, traj: Trajectory):
    """Every estimate of the run's formulation; C-bar estimates without a supplied C-bar
    are fitted on the run itself and say so."""
    constants = run.constants()
    given = run.config.tol("cbar")
    reports = {}
    for estimate_id, form in FORMULATION_OF.items():
        if form is not run.setup.formulation:
            continue
        try:
            report = energy_report(traj, estimate_id, run.setup, constants, cbar=given)
            if report.needs_cbar and given is None:
                report = energy_report(traj, estimate_id, run.setup, constants,
                                       cbar=fit_cbar([report]))
                report = replace(report, notes=report.notes + (
                    "C-bar fitted on this run; the margin is zero by construction",))
        except InvalidArgument as exc:
            reports[estimate_id] = exc
            continue
        reports[estimate_id] = report
    return reports


def _mode_check_estimates(run: _Run) -> None:
    traj, _ = run.simulate()
    folder = run.out / "reports"
    folder.mkdir(exist_ok=True)
    for estimate_id, report in _estimate_reports(run, traj).items():
        if isinstance(report, Exception):
            run.checks.append(Check(f"estimate.{estimate_id}", "skipped", str(report)))
            continue
        write_kv(folder / f"{estimate_id}.txt", report.rows())
        detail = f"margin {report.margin:.6g}"
        if report.violated():
            detail += f"; violated windows: {','.join(report.violated())}"
        run.checks.append(Check(f"estimate.{estimate_id}", report.status, detail))


_CBAR_ESTIMATE = {Formulation.W1: "est2", Formulation.W3: "W3lin_higher"}


def _mode_certify(run: _Run) -> None:
    setup, form = run.setup, run.setup.formulation
    constants = run.constants()
    traj, _ = run.simulate()
    cbar = run.config.tol("cbar")
    source = "supplied"
    if cbar is None and form in _CBAR_ESTIMATE:
        try:
            probe = energy_report(traj, _CBAR_ESTIMATE[form], setup, constants)
            cbar, source = fit_cbar([probe]), f"fitted on this run's {_CBAR_ESTIMATE[form]}"
        except InvalidArgument as exc:
            source = f"unavailable: {exc}"
    cert = smallness_certificate(setup, constants, cbar=cbar)
    write_kv(run.out / "certificate.txt", [*cert.rows(), ("cbar_source", source)])
    run.checks.append(Check("certificate", cert.status,
                            f"failed: {','.join(cert.failed())}" if cert.failed() else ""))
    if not cert.passes:
        return
    m = setup.material
    k = m.k_tilde if form is Formulation.W3 else m.k
    margin = degeneracy_margin(traj, form, k)
    run.checks.append(Check("degeneracy_guard", "pass" if margin.value >= 1 - cert.a0 else "fail",
                            f"margin {margin.value:.6g} vs 1 - a0 = {1 - cert.a0:.6g}"))
    inside = ball_membership(traj, BallSpec(cert.m_bar, cert.M_bar, form, float(m.q)))
    run.checks.append(Check("ball", "pass" if inside.inside else "fail",
                            f"outside: {','.join(inside.failed())}" if not inside.inside else ""))
    variant = {Formulation.W2: "on_u_W2", Formulation.W3: "on_ut_W3"}.get(form, "on_u_W1")
    if float(m.q) > setup.mesh.dim - 1:
        bound = linf_bound(traj, variant, constants)
        run.checks.append(Check(f"linf_{variant}", "pass" if bound.holds else "fail",
                                f"sup {bound.measured:.6g} <= bound {bound.bound:.6g}"))


def _mode_oracle_compare(run: _Run) -> None:
    traj, _ = run.simulate()
    oracle = solve_nonlinear_monolithic(run.setup)
    diff = traj - oracle
    du, dv = diff.step_norm("u", "L2"), diff.step_norm("ut", "L2")
    write_csv(run.out / "oracle_difference.csv", ["step", "time", "u_L2", "ut_L2"],
              zip(range(len(du)), map(float, traj.times), map(float, du), map(float, dv)))
    worst = float(max(du.max(), dv.max()))
    tol = run.config.tol("oracle")
    write_kv(run.out / "oracle.txt", [("u_Linf_L2", float(du.max())),
                                      ("ut_Linf_L2", float(dv.max())), ("tolerance", tol)])
    binding = run.setup.formulation in (Formulation.W1, Formulation.COUPLED)
    status = "pass" if worst <= tol else ("fail" if binding else "inconclusive")
    run.checks.append(Check("oracle_agreement", status,
                            f"max difference {worst:.3e} (tolerance {tol:g})"
                            + ("" if binding else "; diagnostic only")))


def _mode_mms(run: _Run) -> None:
    if run.spec.formulation is not Formulation.W1:
        raise InvalidArgument("mms mode verifies the W1 solver; set formulation: W1")
    cfg = dict(run.spec.checks.get("mms") or {})
    T = float(cfg.get("T", run.spec.T))
    params = run.spec.params
    tables = [
        temporal_study(params, T, int(cfg.get("fine_elements", 2000)),
                       tuple(cfg.get("steps", (25, 50, 100, 200)))),
        spatial_study(params, T, int(cfg.get("fine_steps", 1000)),
                      tuple(cfg.get("elements", (8, 16, 32, 64)))),
    ]
    write_records(run.out / "convergence.csv",
                  ({**row, "fitted_order": t.order} for t in tables for row in t.rows()))
    lo, hi = run.config.tol("order_min"), run.config.tol("order_max")
    for t in tables:
        run.extra[f"order.{t.kind}"] = t.order
        run.checks.append(Check(f"order_{t.kind}", "pass" if lo <= t.order <= hi else "fail",
                                f"fitted order {t.order:.4f} in [{lo}, {hi}]"))


_MODES: dict[str, Callable[[_Run], None]] = {
    "simulate": _mode_simulate,
    "check-estimates": _mode_check_estimates,
    "certify": _mode_certify,
    "oracle-compare": _mode_oracle_compare,
    "mms": _mode_mms,
}


# ---------------------------------------------------------------- execution


def _apply_solver_tolerances(spec: ScenarioSpec, config: RunConfig) -> ScenarioSpec:
    changes = {k: v for k, v in config.tolerances.items() if k in _SOLVER_TOLERANCES}
    return replace(spec, solver=replace(spec.solver, **changes)) if changes else spec


def execute(spec: ScenarioSpec, out: Path, mode: str, config: RunConfig) -> tuple[str, int]:
    """Run one non-sweep mode on ``spec``; returns (summary status, exit code)."""
    out.mkdir(parents=True, exist_ok=True)
    extra = {"mode": mode, "formulation": spec.formulation.value, "seed": config.seed}
    extra.update({f"warning.{i}": w for i, w in enumerate(spec.warnings)})
    run = None
    try:
        run = _Run(_apply_solver_tolerances(spec, config), out, config)
        _MODES[mode](run)
    except DegeneracyError as exc:
        write_error(out / "error.json", exc.record())
        checks = (run.checks if run else []) + [Check("degeneracy", "degenerate", str(exc))]
        extra.update({"location.node": exc.node, "location.step": exc.step})
        return emit_summary(out / "summary.txt", checks, extra), EXIT_CODES["degenerate"]
    except (NonConvergence, StepFailure) as exc:
        write_error(out / "error.json", exc.record())
        checks = (run.checks if run else []) + [Check("solver", "fail", str(exc))]
        return emit_summary(out / "summary.txt", checks, extra), EXIT_CODES["fail"]
    except InvalidArgument as exc:
        write_error(out / "error.json", {"error": "invalid_argument", "message": str(exc)})
        emit_summary(out / "summary.txt", [Check("validation", "fail", str(exc))], extra)
        return "fail", EXIT_INVALID
    extra.update(run.extra)
    status = emit_summary(out / "summary.txt", run.checks, extra)
    return status, EXIT_CODES[status]


def _sweep_point(args) -> tuple[str, int]:
    tree, out, mode, config = args
    try:
        spec = scenario_from_dict(tree)
    except InvalidArgument as exc:
        out.mkdir(parents=True, exist_ok=True)
        write_error(out / "error.json", {"error": "invalid_argument", "message": str(exc)})
        emit_summary(out / "summary.txt", [Check("validation", "fail", str(exc))])
        return "fail", EXIT_INVALID
    return execute(spec, out, mode, config)


def sweep_grid(section: Mapping) -> tuple[str, list[str], list[tuple]]:
    """(mode, axis names, grid points) from a scenario's ``sweep`` section."""
    if not isinstance(section, Mapping) or not isinstance(section.get("axes"), Mapping):
        raise InvalidArgument("sweep needs a 'sweep' section with an 'axes' mapping "
                              "(dotted parameter name -> list of values)")
    mode = section.get("mode", "simulate")
    if mode not in MODES or mode == "sweep":
        raise InvalidArgument(f"sweep.mode must be one of {MODES[:-1]}, got {mode!r}")
    names = list(section["axes"])
    values = [section["axes"][n] for n in names]
    if any(not isinstance(v, list) or not v for v in values):
        raise InvalidArgument("every sweep axis needs a non-empty list of values")
    return mode, names, list(itertools.product(*values))


def _run_sweep(config: RunConfig) -> int:
    tree = yaml.safe_load(config.scenario.read_text()) or {}
    mode, names, grid = sweep_grid(tree.get("sweep"))
    base = {k: v for k, v in tree.items() if k != "sweep"}
    jobs = []
    for i, point in enumerate(grid):
        point_tree = base
        for name, value in zip(names, point):
            point_tree = set_dotted(point_tree, name, value)
        jobs.append((point_tree, config.out / f"point_{i:03d}", mode, config))
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(job) for job in jobs]
    write_csv(config.out / "sweep_summary.csv", ["point", *names, "status", "exit_code"],
              ((i, *point, status, code) for i, (point, (status, code))
               in enumerate(zip(grid, results))))
    checks = [Check(f"point_{i:03d}", status) for i, (status, _) in enumerate(results)]
    status = emit_summary(config.out / "summary.txt", checks,
                          {"mode": "sweep", "point_mode": mode, "points": len(grid),
                           "axes": ",".join(names)})
    codes = [code for _, code in results if code]
    return max(codes) if codes else EXIT_CODES[status]


def run(config: RunConfig) -> int:
    """Execute ``config``; returns the process exit status."""
    config.out.mkdir(parents=True, exist_ok=True)
    try:
        if config.mode == "sweep":
            if not config.scenario.is_file():
                raise InvalidArgument(f"scenario file {config.scenario} does not exist")
            return _run_sweep(config)
        spec = load_scenario(config.scenario)
    except (InvalidArgument, yaml.YAMLError) as exc:
        write_error(config.out / "error.json", {"error": "invalid_argument", "message": str(exc)})
        emit_summary(config.out / "summary.txt", [Check("validation", "fail", str(exc))],
                     {"mode": config.mode})
        return EXIT_INVALID
    return execute(spec, config.out, config.mode, config)[1]


def _tolerance(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {name!r} needs a number") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="westervelt", description=__doc__.splitlines()[0])
    parser.add_argument("--scenario", required=True, type=Path, help="scenario YAML file")
    parser.add_argument("--mode", default="simulate", choices=MODES)
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for the constant-estimation ascent starts")
    parser.add_argument("--workers", type=int, default=1, help="parallel sweep points")
    parser.add_argument("--tol", type=_tolerance, action="append", default=[],
                        metavar="NAME=VALUE",
                        help="tolerance or constant override (repeatable): oracle, "
                             "order_min, order_max, cbar, picard_tol, newton_tol, or a "
                             "constant such as C_P")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = RunConfig(args.scenario, args.out, args.mode, args.seed, args.workers,
                           dict(args.tol))
    except InvalidArgument as exc:
        print(f"westervelt: {exc}", file=sys.stderr)
        return EXIT_INVALID
    code = run(config)
    summary = config.out / "summary.txt"
    if summary.is_file():
        log.info("summary written to %s", summary)
        print(summary.read_text().splitlines()[0])
    return code


if __name__ == "__main__":
    sys.exit(main())
