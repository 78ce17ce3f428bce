"""
convexpde Runner

Glue between a ProblemConfig and a RunReport for the CLI subcommands:

- check_invariance: analytic criteria, sampled resolvent invariance, the two sampled
  characterizations (informational), tangency and growth audits
- run_solve:        constrained solve on one box, optional field dumps
- run_solve_rn:     expanding-domain truncation with per-level dumps and the tail table

Exit codes follow the CLI: 0 passed / converged, 2 checks failed, 3 solver failure.
"""

import csv
import logging
import os
import time
from dataclasses import replace
from typing import Callable, List, Optional

import numpy as np

from convexpde.constraints import Polyhedron, Rectangle, evaluate_param
from convexpde.criteria import (
    CriterionReport,
    CriterionStatus,
    check_eigenvector_conditions,
    check_form_sign,
    check_mueller,
)
from convexpde.errors import IOFailure, TruncationError, ValidationError
from convexpde.field_io import dump_field
from convexpde.grid import VectorField
from convexpde.integrity import digest_file
from convexpde.logging import RunLog
from convexpde.nonlinearity import audit_growth, audit_tangency
from convexpde.operator import AssembledOperator, assemble, estimate_garding
from convexpde.problem import ProblemConfig
from convexpde.report import RunReport
from convexpde.resolvent import (
    ResolventHandle,
    sample_generator_tangency,
    sample_projection_inequality,
    verify_resolvent_invariance,
)
from convexpde.solver import SolveReport, Termination, default_h_schedule, solve
from convexpde.truncation import run_truncation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 2
EXIT_SOLVER_FAILURE = 3

MIN_INVARIANCE_SAMPLES = 64


class _Artifacts:
    """Output directory bookkeeping: dumps, digests and the run log."""

    def __init__(self, problem: ProblemConfig, out_dir: Optional[str]):
        self.prefix = problem.output.prefix
        self.directory = out_dir
        self.digests = {}
        self.log: Optional[RunLog] = None
        if out_dir is not None:
            try:
                os.makedirs(out_dir, exist_ok=True)
            except OSError as e:
                raise IOFailure(f"cannot create output directory {out_dir}: {e}") from e
            self.log = RunLog(os.path.join(out_dir, f"{self.prefix}.runlog"))

    def event(self, event: str, stage: str = "", meta: Optional[dict] = None):
        if self.log is not None:
            self.log.log(event, stage, meta)

    def dump(self, name: str, u: VectorField) -> Optional[str]:
        if self.directory is None:
            return None
        path = os.path.join(self.directory, f"{self.prefix}_{name}.csv")
        dump_field(u, path)
        self.digests[os.path.basename(path)] = digest_file(path)
        self.event("dump", name, {"file": os.path.basename(path)})
        return path

    def register(self, path: str):
        self.digests[os.path.basename(path)] = digest_file(path)


def _new_report(command: str, problem: ProblemConfig, overrides: dict) -> RunReport:
    return RunReport(command=command, problem=problem.name, seed=problem.seed,
                     config=problem.echo, overrides=dict(overrides))


def _component(param, k: int, M: int, sign: float) -> Callable:
    def xi(x):
        return sign * float(evaluate_param(param, np.atleast_2d(x), (M,))[0, k])

    return xi


def analytic_criteria(problem: ProblemConfig, op: AssembledOperator) -> List[CriterionReport]:
    """The criteria that apply to the problem's constraint family."""
    field = problem.constraint
    grid = op.grid
    M = problem.M
    if isinstance(field, Rectangle):
        reports = [check_mueller(op, grid, field.lower, field.upper, problem.assertions)]
        if not problem.coeffs.diagonal:
            normals, offsets = [], []
            for k in range(M):
                e = np.zeros(M)
                e[k] = 1.0
                normals += [e, -e]
                offsets += [_component(field.upper, k, M, 1.0), _component(field.lower, k, M, -1.0)]
            reports.append(check_eigenvector_conditions(problem.coeffs, normals, grid))
            reports += [check_form_sign(op, grid, p, xi, problem.assertions) for p, xi in zip(normals, offsets)]
        return reports
    if isinstance(field, Polyhedron):
        reports = [check_eigenvector_conditions(problem.coeffs, field.normals, grid)]
        reports += [check_form_sign(op, grid, p, xi, problem.assertions)
                    for p, xi in zip(field.normals, field.offsets)]
        return reports
    return [CriterionReport("analytic", CriterionStatus.NOT_APPLICABLE, assertions=list(problem.assertions),
                            note=f"no analytic criterion for the {field.variant} family")]


def check_invariance(problem: ProblemConfig, workers: int = 1, out_dir: Optional[str] = None,
                     overrides: Optional[dict] = None) -> RunReport:
    report = _new_report("check-invariance", problem, overrides or {})
    artifacts = _Artifacts(problem, out_dir)
    cfg = problem.solver
    started = time.perf_counter()

    grid = problem.primary_grid()
    op = assemble(problem.coeffs, grid, seed=problem.seed)
    bound = problem.constraint.bind(grid)

    for crit in analytic_criteria(problem, op):
        report.add_check(crit.criterion, crit.status.value, crit.to_dict())
        report.summary.append(f"criterion {crit.criterion}: {crit.status.value}"
                              + (f" (margin {crit.margin:.3e})" if crit.margin is not None else "")
                              + (f" [{crit.note}]" if crit.note else ""))
        for w in crit.witnesses[:3]:
            report.summary.append(f"  witness: {w}")
    report.timings["criteria"] = time.perf_counter() - started

    started = time.perf_counter()
    cert = estimate_garding(op, seed=problem.seed)
    hs = cfg.h_schedule or default_h_schedule(op, cert.omega)
    rh = ResolventHandle(op, hs[0], cert.omega, seed=problem.seed)
    invariance = verify_resolvent_invariance(rh, bound, n_samples=max(cfg.n_invariance_samples, MIN_INVARIANCE_SAMPLES),
                                             h_list=hs, seed=problem.seed, workers=workers)
    report.invariance = invariance.to_dict()
    report.add_check("resolvent_invariance", invariance.status,
                     {"omega": cert.omega, "alpha": cert.alpha, "continuity": op.continuity})
    report.summary.append(f"form constants: ω={cert.omega:.6g} α={cert.alpha:.6g} continuity c={op.continuity:.6g}")
    for row in invariance.rows:
        line = f"resolvent invariance h={row.h:.6g}: {row.status}, worst distance {row.worst_distance:.3e}"
        if not row.passed:
            line += f", witness node {row.witness_node} (sample {row.witness_sample})"
        report.summary.append(line)
    artifacts.event("invariance", "sampled", {"status": invariance.status, "h": hs})
    report.timings["invariance"] = time.perf_counter() - started

    started = time.perf_counter()
    for sampled in (sample_projection_inequality(op, bound, seed=problem.seed),
                    sample_generator_tangency(op, bound, seed=problem.seed)):
        report.add_check(sampled.name, sampled.status, sampled.to_dict(), informational=True)
        report.summary.append(f"{sampled.name} (informational): {sampled.status}")
    tangency = audit_tangency(problem.forcing, bound, grid, n_boundary_samples=cfg.n_tangency_samples,
                              seed=problem.seed)
    report.add_check("tangency", tangency.status, tangency.to_dict())
    report.summary.append(f"tangency audit: {tangency.status} ({tangency.n_checked} boundary samples)")
    growth = audit_growth(problem.forcing, bound, grid, seed=problem.seed)
    report.add_check("growth", growth.status, growth.to_dict())
    report.summary.append(f"growth audit: {growth.status} (worst ratio {growth.worst_ratio:.3e})")
    report.timings["audits"] = time.perf_counter() - started

    failed = report.failed_checks()
    report.status = "FAIL" if failed else "PASS"
    report.exit_code = EXIT_CHECKS_FAILED if failed else EXIT_OK
    if failed:
        report.message = "failed checks: " + ", ".join(failed)
    report.artifacts = dict(artifacts.digests)
    return report


def _solve_summary(rep: SolveReport, tol_res: float) -> List[str]:
    lines = [f"termination: {rep.termination.value}"]
    if rep.refusal is not None:
        lines.append(f"refused by: {rep.refusal}")
    if rep.stages:
        relation = "<=" if rep.residual <= tol_res else ">"
        lines.append(f"residual {rep.residual:.3e} {relation} tol_res {tol_res:g}")
        lines.append(f"constraint violation {rep.violation:.3e}")
        lines.append("stages (t, h, iterations, residual, gap, certificate):")
        lines.extend(
            f"  t={s.t:g} h={s.h:.6g} iters={s.iterations} residual={s.residual:.3e} "
            f"gap={s.fixed_point_gap:.3e} certificate={s.certificate:.3e}"
            + ("" if s.certificate_holds else " (certificate violated)")
            for s in rep.stages
        )
    if rep.invariance is not None:
        witness = rep.invariance.witness()
        lines.append(f"resolvent invariance: {rep.invariance.status}")
        if witness is not None:
            lines.append(f"witness node {witness.witness_node} (sample {witness.witness_sample}, h={witness.h:.6g}, "
                         f"distance {witness.worst_distance:.3e})")
    if rep.tangency is not None and not rep.tangency.passed:
        lines.append(f"tangency witness: {rep.tangency.witness}")
    return lines


def _solve_exit(termination: Termination) -> int:
    if termination == Termination.CONVERGED:
        return EXIT_OK
    if termination == Termination.INVARIANCE_REFUSED:
        return EXIT_CHECKS_FAILED
    return EXIT_SOLVER_FAILURE


def run_solve(problem: ProblemConfig, workers: int = 1, out_dir: Optional[str] = None,
              overrides: Optional[dict] = None) -> RunReport:
    report = _new_report("solve", problem, overrides or {})
    artifacts = _Artifacts(problem, out_dir)
    cfg = problem.solver
    if workers != cfg.workers:
        cfg = replace(cfg, workers=workers)

    started = time.perf_counter()
    grid = problem.primary_grid()
    op = assemble(problem.coeffs, grid, seed=problem.seed)
    bound = problem.constraint.bind(grid)

    def callback(stage: int, iteration: int, u: VectorField):
        artifacts.dump(f"stage{stage:02d}_iter{iteration:05d}", u)

    rep = solve(op, None, bound, problem.forcing, cfg, callback=callback)
    report.timings["solve"] = time.perf_counter() - started
    for s in rep.stages:
        artifacts.event("stage", f"t={s.t:g},h={s.h:.6g}", s.to_dict())
    if rep.u is not None:
        artifacts.dump("solution", rep.u)

    report.solves.append(rep.to_dict())
    report.invariance = rep.invariance.to_dict() if rep.invariance else None
    report.status = rep.termination.value
    report.exit_code = _solve_exit(rep.termination)
    report.message = rep.message
    report.summary = _solve_summary(rep, cfg.tol_res)
    report.artifacts = dict(artifacts.digests)
    artifacts.event("termination", rep.termination.value, {"residual": rep.residual})
    return report


def write_tail_table(path: str, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["n", "R_probe", "l2_tail", "h1_tail", "diff_h1"])
            for n, R, l2, h1, diff in rows:
                writer.writerow([n, format(R, ".17g"), format(l2, ".17g"), format(h1, ".17g"),
                                 "" if diff is None else format(diff, ".17g")])
    except OSError as e:
        raise IOFailure(f"cannot write tail table {path}: {e}") from e


def run_solve_rn(problem: ProblemConfig, workers: int = 1, out_dir: Optional[str] = None,
                 overrides: Optional[dict] = None) -> RunReport:
    if problem.truncation is None:
        raise ValidationError(f"problem {problem.name} has no truncation section")
    report = _new_report("solve-rn", problem, overrides or {})
    artifacts = _Artifacts(problem, out_dir)
    cfg = problem.solver
    if workers != cfg.workers:
        cfg = replace(cfg, workers=workers)

    def callback(level: int, u: VectorField):
        artifacts.dump(f"level{level:02d}", u)

    started = time.perf_counter()
    try:
        u, tail, solves = run_truncation(problem.coeffs, problem.constraint, problem.forcing,
                                         problem.truncation, cfg, callback=callback)
    except TruncationError as e:
        report.timings["truncation"] = time.perf_counter() - started
        report.status = type(e).__name__
        report.exit_code = EXIT_SOLVER_FAILURE
        report.message = str(e)
        report.summary.append(f"truncation stopped: {e}")
        report.artifacts = dict(artifacts.digests)
        artifacts.event("termination", report.status, {"message": str(e)})
        return report
    report.timings["truncation"] = time.perf_counter() - started

    report.solves = [rep.to_dict() for rep in solves]
    report.tail = tail.to_dict()
    report.tail["table"] = [list(row) for row in tail.table()]
    if out_dir is not None:
        path = os.path.join(out_dir, f"{artifacts.prefix}_tail.csv")
        write_tail_table(path, tail.table())
        artifacts.register(path)

    report.summary.append(f"terminated by: {tail.terminated_by} ({tail.note})")
    report.summary.append("n  R_probe  l2_tail  h1_tail  diff_h1")
    for n, R, l2, h1, diff in tail.table():
        report.summary.append(f"{n}  {R:g}  {l2:.3e}  {h1:.3e}  {'-' if diff is None else format(diff, '.3e')}")
    for lv in tail.levels:
        details = {"R": lv.R, "diff_h1": lv.diff_h1, "shell_tail": lv.shell_tail, "envelope_tail": lv.envelope_tail}
        artifacts.event("level", f"level {lv.level}", details)

    converged = tail.terminated_by == "cauchy"
    report.status = "Converged" if converged else "NotCauchy"
    report.exit_code = EXIT_OK if converged else EXIT_SOLVER_FAILURE
    if not converged:
        report.message = (f"successive H¹ differences stayed above tol_cauchy "
                          f"{problem.truncation.tol_cauchy:g} up to R = {problem.truncation.radii[-1]:g}")
    report.artifacts = dict(artifacts.digests)
    return report
