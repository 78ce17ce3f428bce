import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde.config import convexpde_VERSION
from convexpde.degree import (
    box_projection,
    brouwer_degree_small,
    finite_phi,
    identity_minus,
    random_tangent_fields,
)
from convexpde.errors import (
    ConfigError,
    ConstraintError,
    DegreeError,
    ExponentOutOfRange,
    FieldIOError,
    ForcingError,
    OperatorError,
    ResolventError,
    SolverError,
    TruncationError,
)
from convexpde.nonlinearity import compute_apriori_exponents
from convexpde.problem import BUILTIN_PROBLEMS, ProblemConfig, load_builtin, load_config
from convexpde.report import emit_report
from convexpde.runner import (
    EXIT_CHECKS_FAILED,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    check_invariance,
    run_solve,
    run_solve_rn,
)

EXIT_USAGE = 1


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got '{text}'")


def load_problem(args) -> ProblemConfig:
    """Loads --config or --problem and applies the command-line overrides."""
    problem = load_config(args.config) if args.config else load_builtin(args.problem)
    if getattr(args, "grid_n", None) is not None:
        problem = problem.with_grid_n(args.grid_n)
    changes = {}
    if getattr(args, "h_schedule", None) is not None:
        changes["h_schedule"] = args.h_schedule
    if getattr(args, "tol_res", None) is not None:
        changes["tol_res"] = args.tol_res
    if getattr(args, "override_invariance", False):
        changes["override_invariance"] = True
    if getattr(args, "dump_every", None) is not None:
        changes["dump_every"] = args.dump_every
    if changes:
        problem = problem.with_solver(**changes)
    return problem


def overrides_of(args) -> dict:
    """Overrides echoed into the report; --workers is left out so reports match for any thread count."""
    out = {}
    for key in ("grid_n", "h_schedule", "tol_res", "dump_every"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    if getattr(args, "override_invariance", False):
        out["override_invariance"] = True
    return out


def _output_dir(args, problem: ProblemConfig, always: bool) -> Optional[str]:
    if args.out:
        return args.out
    if always or problem.solver.dump_every > 0 or problem.output.report:
        return problem.output.directory
    return None


def run_problem_command(args) -> int:
    problem = load_problem(args)
    if args.command == "check-invariance":
        out_dir = _output_dir(args, problem, always=False)
        report = check_invariance(problem, args.workers, out_dir, overrides_of(args))
    elif args.command == "solve":
        out_dir = _output_dir(args, problem, always=False)
        report = run_solve(problem, args.workers, out_dir, overrides_of(args))
    else:
        out_dir = _output_dir(args, problem, always=True)
        report = run_solve_rn(problem, args.workers, out_dir, overrides_of(args))

    path = args.report
    if path is None and problem.output.report and out_dir is not None:
        path = os.path.join(out_dir, problem.output.report)
    print(emit_report(report, path), end="")
    return report.exit_code


def run_project(args) -> int:
    problem = load_problem(args)
    field = problem.constraint
    x = np.asarray(args.x if args.x is not None else [0.0] * problem.N, dtype=float)
    u = np.asarray(args.u, dtype=float)
    if x.shape != (problem.N,):
        raise ConstraintError(f"--x needs {problem.N} coordinates, got {x.size}")
    if u.shape != (problem.M,):
        raise ConstraintError(f"--u needs {problem.M} components, got {u.size}")
    projected = field.project(x, u)
    result = {
        "family": field.variant,
        "x": x.tolist(),
        "u": u.tolist(),
        "projection": projected.tolist(),
        "distance": float(np.linalg.norm(u - projected)),
    }
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print(f"family:     {result['family']}")
        print(f"x:          {result['x']}")
        print(f"u:          {result['u']}")
        print(f"projection: {[format(v, '.17g') for v in result['projection']]}")
        print(f"distance:   {result['distance']:.17g}")
    return EXIT_OK


def _degree_cases(args):
    d = args.dim
    w = args.half_width
    box = [(-w, w)] * d
    if args.random_fields > 0:
        rng = np.random.default_rng(args.seed)
        for i, (A, F, lower, upper) in enumerate(random_tangent_fields(rng, args.random_fields, d)):
            g = identity_minus(finite_phi(A, F, box_projection(lower, upper), args.h))
            yield f"random field {i}", g, list(zip(lower - 1.0, upper + 1.0)), 1
        return
    if args.map == "identity":
        yield "identity", (lambda u: np.asarray(u, dtype=float)), box, 1
    elif args.map == "negative":
        yield "negative", (lambda u: -np.asarray(u, dtype=float)), box, (-1) ** d
    else:
        phi = finite_phi(np.eye(d), lambda u: -u, box_projection([-1.0] * d, [1.0] * d), args.h)
        yield "I - phi_h", identity_minus(phi), box, 1


def run_degree(args) -> int:
    failed = 0
    for label, g, box, expected in _degree_cases(args):
        degree = brouwer_degree_small(g, box)
        ok = degree == expected
        failed += not ok
        print(f"{label}: degree {degree} (expected {expected}) {'PASS' if ok else 'FAIL'}")
    return EXIT_CHECKS_FAILED if failed else EXIT_OK


def run_exponents(args) -> int:
    exps = compute_apriori_exponents(args.s, args.q, args.N)
    result = {"N": args.N, "s": args.s, "q": args.q, "gamma1": exps.gamma1, "gamma2": exps.gamma2,
              "p_embed": exps.p_embed, "theta1": exps.theta1, "theta2": exps.theta2}
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        for key in ("gamma1", "gamma2", "p_embed", "theta1", "theta2"):
            print(f"{key}: {result[key]:.12g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="convexpde CLI: semilinear elliptic systems under pointwise convex constraints",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument("--version", action="version", version=f"convexpde {convexpde_VERSION}")
    parser.add_argument("--verbose", "-v", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    subparsers = parser.add_subparsers(dest="command", required=True)

    source = argparse.ArgumentParser(add_help=False)
    group = source.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="Path to a JSON problem document")
    group.add_argument("--problem", choices=sorted(BUILTIN_PROBLEMS), help="Built-in problem")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--grid-n", type=int, help="Interior nodes per axis (overrides the domain section)")
    run.add_argument("--h-schedule", type=_floats, help="Comma-separated resolvent steps, decreasing")
    run.add_argument("--tol-res", type=float, help="Residual tolerance")
    run.add_argument("--override-invariance", action="store_true",
                     help="Run the constrained solver even when the invariance checks fail")
    run.add_argument("--dump-every", type=int, help="Dump the iterate every k iterations (0 = off)")
    run.add_argument("--workers", type=int, default=1, help="Threads for sampled invariance checks")
    run.add_argument("--report", help="Write the run report to this path")
    run.add_argument("--out", help="Directory for field dumps, the run log and the tail table")

    for name, help_text in (
        ("check-invariance", "Analytic criteria, sampled resolvent invariance and forcing audits"),
        ("solve", "Constrained solve on one box"),
        ("solve-rn", "Expanding-domain solve on the truncation schedule"),
    ):
        subparsers.add_parser(name, parents=[source, run], help=help_text,
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    project_parser = subparsers.add_parser("project", parents=[source], help="Project one point onto K(x)")
    project_parser.add_argument("--x", type=_floats, help="Spatial point (default: origin)")
    project_parser.add_argument("--u", type=_floats, required=True, help="Value in R^M to project")
    project_parser.add_argument("--json", action="store_true", help="Output as JSON")

    degree_parser = subparsers.add_parser("degree", help="Brouwer degree of small maps on boxes",
                                          formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    degree_parser.add_argument("--map", choices=["identity", "negative", "phi"], default="phi",
                               help="Map whose degree is computed")
    degree_parser.add_argument("--dim", type=int, choices=[1, 2, 3], default=2, help="Dimension d")
    degree_parser.add_argument("--half-width", type=float, default=2.0, help="Box [-w, w]^d")
    degree_parser.add_argument("--h", type=float, default=0.1, help="Resolvent step of phi_h")
    degree_parser.add_argument("--random-fields", type=int, default=0,
                               help="Check I - phi_h on this many random inward-pointing fields instead")
    degree_parser.add_argument("--seed", type=int, default=0, help="Seed for --random-fields")

    exp_parser = subparsers.add_parser("exponents", help="A priori interpolation exponents",
                                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    exp_parser.add_argument("--N", type=int, required=True, help="Space dimension")
    exp_parser.add_argument("--s", type=float, required=True, help="Growth exponent in u")
    exp_parser.add_argument("--q", type=float, required=True, help="Growth exponent in the gradient")
    exp_parser.add_argument("--json", action="store_true", help="Output as JSON")
    return parser


def main(argv: Optional[List[str]] = None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command in ("check-invariance", "solve", "solve-rn"):
            code = run_problem_command(args)
        elif args.command == "project":
            code = run_project(args)
        elif args.command == "degree":
            code = run_degree(args)
        else:
            code = run_exponents(args)
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except FieldIOError as e:
        print(f"IO error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except ConstraintError as e:
        print(f"Constraint error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except ExponentOutOfRange as e:
        print(f"Exponent error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except DegreeError as e:
        print(f"Degree error: {e}", file=sys.stderr)
        sys.exit(EXIT_CHECKS_FAILED)
    except (OperatorError, ResolventError, ForcingError, SolverError, TruncationError) as e:
        print(f"Solver error: {e}", file=sys.stderr)
        sys.exit(EXIT_SOLVER_FAILURE)
    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    sys.exit(code)


if __name__ == "__main__":
    main()
