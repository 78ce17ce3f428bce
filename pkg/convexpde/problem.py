"""
convexpde Problem Configuration

A problem is a JSON document with the sections

    name, seed, domain, operator, constraints, nonlinearity, solver, truncation, output

`parse_config(text)` validates the whole document (unknown keys are rejected, component
counts must agree across sections, growth exponents must be admissible) and builds the
objects a run needs. The first error is reported with the line of the offending key.

Coefficient, constraint and forcing data may be given as numbers, lists, or expression
strings in a small whitelisted language:

    variables   x1..xN (space), u1..uM (unknowns), d{k}_{i} = ∂_i u_k (forcing only)
    functions   sin cos tan exp log sqrt abs tanh sinh cosh arctan minimum maximum where
    constants   pi e
    operators   + - * / ** % < <= > >= == != & |

Built-in problems live in BUILTIN_PROBLEMS and go through the same parser.
"""

import ast
import json
import logging
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from convexpde.constraints import (
    Ball,
    Box,
    ConstantConvex,
    ConstraintField,
    Ellipsoid,
    Polyhedron,
    Rectangle,
    Tube,
)
from convexpde.errors import ConvexPDEError, IOFailure, ParseError, ValidationError
from convexpde.grid import GridDomain
from convexpde.nonlinearity import FORCING_REGISTRY, ForcingTerm, check_exponents, make_forcing
from convexpde.operator import OperatorCoefficients, _as_matrix
from convexpde.solver import SolverConfig
from convexpde.truncation import TruncationSchedule

logger = logging.getLogger(__name__)

SECTIONS = ("name", "seed", "domain", "operator", "constraints", "nonlinearity", "solver", "truncation", "output")
REQUIRED_SECTIONS = ("domain", "operator", "constraints", "nonlinearity")

FUNCTIONS: Dict[str, Callable] = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh, "arctan": np.arctan,
    "minimum": np.minimum, "maximum": np.maximum, "where": np.where,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.USub, ast.UAdd, ast.BitAnd, ast.BitOr,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


# --------------------------------------------------------------------------- expressions


class Expression:
    """A compiled whitelisted expression; call it with a variable environment."""

    def __init__(self, source: str, variables: Sequence[str]):
        self.source = source
        self.variables = frozenset(variables)
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as e:
            raise ValueError(f"invalid expression {source!r}: {e.msg}") from e
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise ValueError(f"{type(node).__name__} is not allowed in expression {source!r}")
            if isinstance(node, ast.Constant) and (isinstance(node.value, bool)
                                                   or not isinstance(node.value, (int, float))):
                raise ValueError(f"only numeric literals are allowed in {source!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords:
                    raise ValueError(f"unsupported call in expression {source!r}")
            if isinstance(node, ast.Name):
                known = node.id in FUNCTIONS or node.id in CONSTANTS or node.id in self.variables
                if not known:
                    raise ValueError(f"unknown name '{node.id}' in expression {source!r}")
        self._code = compile(tree, "<expression>", "eval")

    def __call__(self, env: Dict[str, Any]):
        scope = dict(FUNCTIONS)
        scope.update(CONSTANTS)
        scope.update(env)
        return eval(self._code, {"__builtins__": {}}, scope)

    def __repr__(self):
        return f"Expression({self.source!r})"


def space_variables(N: int) -> List[str]:
    return [f"x{i + 1}" for i in range(N)]


def forcing_variables(N: int, M: int) -> List[str]:
    names = space_variables(N) + [f"u{k + 1}" for k in range(M)]
    names += [f"d{k + 1}_{i + 1}" for k in range(M) for i in range(N)]
    return names


def compile_expression(source: str, variables: Sequence[str]) -> Expression:
    return Expression(source, variables)


def _contains_str(value) -> bool:
    if isinstance(value, str):
        return True
    if isinstance(value, (list, tuple)):
        return any(_contains_str(v) for v in value)
    return False


def _compile_tree(value, variables):
    if isinstance(value, str):
        return Expression(value, variables)
    if isinstance(value, (list, tuple)):
        return [_compile_tree(v, variables) for v in value]
    return float(value)


def _eval_tree(tree, env):
    if isinstance(tree, Expression):
        return tree(env)
    if isinstance(tree, list):
        return [_eval_tree(t, env) for t in tree]
    return tree


def spatial_param(value, N: int):
    """A constant array, or a callable x -> array when any entry is an expression in x."""
    if not _contains_str(value):
        return np.asarray(value, dtype=float)
    tree = _compile_tree(value, space_variables(N))
    names = space_variables(N)

    def param(x):
        env = {name: float(x[i]) for i, name in enumerate(names)}
        return np.asarray(_eval_tree(tree, env), dtype=float)

    param.source = value
    return param


# --------------------------------------------------------------------------- validation helpers


def _line_of(text: str, key: Optional[str]) -> Optional[int]:
    if not key:
        return None
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, match.start()) + 1 if match else None


class _Checker:
    """Raises ValidationError with the line of the offending key in the source text."""

    def __init__(self, text: str):
        self.text = text

    def fail(self, path: str, message: str):
        key = path.split(".")[-1]
        line = _line_of(self.text, key)
        where = f"line {line}: " if line else ""
        raise ValidationError(f"{where}{path}: {message}")

    def section(self, doc: dict, name: str, allowed: Sequence[str], required: Sequence[str] = ()) -> dict:
        value = doc.get(name, {})
        if not isinstance(value, dict):
            self.fail(name, "section must be an object")
        unknown = sorted(set(value) - set(allowed))
        if unknown:
            self.fail(f"{name}.{unknown[0]}", f"unknown key (allowed: {', '.join(allowed)})")
        for key in required:
            if key not in value:
                self.fail(name, f"missing required key '{key}'")
        return value

    def integer(self, path: str, value, minimum: Optional[int] = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.fail(path, f"must be >= {minimum}, got {value}")
        return value

    def number(self, path: str, value, positive: bool = False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if positive and not value > 0:
            self.fail(path, f"must be positive, got {value}")
        return float(value)

    def vector(self, path: str, value, M: int, allow_expr: bool = True):
        """Scalar (broadcast), length-M list, or expressions; returns a Param."""
        if isinstance(value, (int, float, str)) and not isinstance(value, bool):
            value = [value] * M
        if not isinstance(value, list) or len(value) != M:
            self.fail(path, f"expected {M} entries, got {value!r}")
        if not allow_expr and _contains_str(value):
            self.fail(path, "expressions are not allowed here")
        return value

    def param(self, path: str, value, N: int):
        try:
            return spatial_param(value, N)
        except (ValueError, TypeError) as e:
            self.fail(path, str(e))


# --------------------------------------------------------------------------- config


@dataclass
class OutputSection:
    directory: str = "."
    prefix: str = "run"
    dump_every: int = 0
    report: Optional[str] = None


@dataclass
class ProblemConfig:
    """A validated problem with every run object built."""

    name: str
    N: int
    M: int
    seed: int
    grid: Optional[GridDomain]
    coeffs: OperatorCoefficients
    constraint: ConstraintField
    forcing: ForcingTerm
    solver: SolverConfig
    truncation: Optional[TruncationSchedule]
    output: OutputSection
    assertions: List[str] = field(default_factory=list)
    echo: dict = field(default_factory=dict)

    def primary_grid(self) -> GridDomain:
        """The configured box, or the first truncation level when only a schedule is given."""
        if self.grid is not None:
            return self.grid
        return self.truncation.grid(0)

    def with_grid_n(self, n_per_axis: int) -> "ProblemConfig":
        grid = GridDomain(self.N, self.primary_grid().R, n_per_axis)
        return replace(self, grid=grid)

    def with_solver(self, **changes) -> "ProblemConfig":
        return replace(self, solver=replace(self.solver, **changes))


_DOMAIN_KEYS = ("N", "R", "n_per_axis", "dx")
_OPERATOR_KEYS = ("M", "diffusion", "reaction", "drift", "upwind", "A", "B", "C", "diagonal")
_CONSTRAINT_KEYS = ("family", "lower", "upper", "center", "scale", "base", "matrix", "det_floor",
                    "normals", "offsets", "envelope", "assertions")
_NONLINEARITY_KEYS = ("name", "params", "expression", "s", "q", "beta", "c")
_SOLVER_KEYS = tuple(f.name for f in fields(SolverConfig) if f.name not in ("seed", "dump_every"))
_TRUNCATION_KEYS = ("radii", "dx", "tol_cauchy", "probe_fractions")
_OUTPUT_KEYS = ("directory", "prefix", "dump_every", "report")


def _parse_domain(chk: _Checker, doc: dict, has_truncation: bool):
    sec = chk.section(doc, "domain", _DOMAIN_KEYS, required=("N",))
    N = chk.integer("domain.N", sec["N"], 1)
    if N > 3:
        chk.fail("domain.N", f"spatial dimension must be 1, 2 or 3, got {N}")
    if "R" not in sec:
        if not has_truncation:
            chk.fail("domain", "missing required key 'R' (or a truncation section)")
        return N, None
    R = chk.number("domain.R", sec["R"], positive=True)
    if ("n_per_axis" in sec) == ("dx" in sec):
        chk.fail("domain", "give exactly one of 'n_per_axis' and 'dx'")
    if "n_per_axis" in sec:
        return N, GridDomain(N, R, chk.integer("domain.n_per_axis", sec["n_per_axis"], 1))
    dx = chk.number("domain.dx", sec["dx"], positive=True)
    try:
        return N, GridDomain.from_spacing(N, R, dx)
    except ValueError as e:
        chk.fail("domain.dx", str(e))


def _coefficient(chk: _Checker, path: str, value, N: int, M: int):
    """Scalar, diagonal list, M×M matrix, or the same with expression entries."""
    if value is None:
        return None
    if isinstance(value, list) and value and not isinstance(value[0], list):
        if len(value) != M:
            chk.fail(path, f"diagonal coefficient needs {M} entries")
    elif isinstance(value, list):
        if len(value) != M or any(not isinstance(row, list) or len(row) != M for row in value):
            chk.fail(path, f"matrix coefficient must be {M}x{M}")
    elif not isinstance(value, (int, float, str)) or isinstance(value, bool):
        chk.fail(path, f"unsupported coefficient {value!r}")
    param = chk.param(path, value, N)
    if callable(param):
        return lambda x, p=param: _as_matrix(p(x), M)
    return _as_matrix(param, M)


def _parse_operator(chk: _Checker, doc: dict, N: int):
    sec = chk.section(doc, "operator", _OPERATOR_KEYS, required=("M",))
    M = chk.integer("operator.M", sec["M"], 1)
    upwind = bool(sec.get("upwind", False))
    try:
        if "A" in sec:
            for key in ("diffusion", "reaction", "drift"):
                if key in sec:
                    chk.fail(f"operator.{key}", "cannot be combined with an explicit 'A' table")
            table = sec["A"]
            if not isinstance(table, list) or len(table) != N or any(
                    not isinstance(row, list) or len(row) != N for row in table):
                chk.fail("operator.A", f"A must be an {N}x{N} table of coefficients")
            A = [[_coefficient(chk, "operator.A", table[i][j], N, M) for j in range(N)] for i in range(N)]
            B = None
            if "B" in sec:
                if not isinstance(sec["B"], list) or len(sec["B"]) != N:
                    chk.fail("operator.B", f"B must list {N} coefficients")
                B = [_coefficient(chk, "operator.B", b, N, M) for b in sec["B"]]
            C = _coefficient(chk, "operator.C", sec.get("C"), N, M)
            diagonal = sec.get("diagonal")
            return M, OperatorCoefficients(N, M, A, B, C, diagonal=diagonal, upwind=upwind)

        for key in ("B", "C", "diagonal"):
            if key in sec:
                chk.fail(f"operator.{key}", "needs an explicit 'A' table")
        diffusion = chk.vector("operator.diffusion", sec.get("diffusion", 1.0), M, allow_expr=False)
        reaction = sec.get("reaction")
        if reaction is not None:
            reaction = chk.vector("operator.reaction", reaction, M, allow_expr=False)
        drift = sec.get("drift")
        if drift is not None:
            if not isinstance(drift, list) or len(drift) != N:
                chk.fail("operator.drift", f"drift must list {N} vectors")
            drift = [chk.vector("operator.drift", d, M, allow_expr=False) for d in drift]
        if any(not d > 0 for d in diffusion):
            chk.fail("operator.diffusion", "diffusion coefficients must be positive")
        return M, OperatorCoefficients.diagonal_system(N, M, diffusion, reaction, drift, upwind=upwind)
    except ValueError as e:
        chk.fail("operator", str(e))


def _parse_base(chk: _Checker, value, M: int):
    if not isinstance(value, dict) or len(value) != 1:
        chk.fail("constraints.base", "base must be {\"ball\": radius} or {\"box\": {\"lower\": ..., \"upper\": ...}}")
    kind, data = next(iter(value.items()))
    if kind == "ball":
        return Ball(chk.number("constraints.base", data, positive=True))
    if kind == "box":
        if not isinstance(data, dict) or set(data) != {"lower", "upper"}:
            chk.fail("constraints.base", "box base needs 'lower' and 'upper'")
        lower = chk.vector("constraints.lower", data["lower"], M, allow_expr=False)
        upper = chk.vector("constraints.upper", data["upper"], M, allow_expr=False)
        return Box(lower, upper)
    chk.fail("constraints.base", f"unknown base set '{kind}'")


def _parse_constraints(chk: _Checker, doc: dict, N: int, M: int):
    if "constraints" not in doc:
        chk.fail("constraints", "missing required section")
    sec = chk.section(doc, "constraints", _CONSTRAINT_KEYS, required=("family",))
    family = sec["family"]
    allowed = {
        "rectangle": ("lower", "upper"),
        "tube": ("center", "scale", "base", "envelope"),
        "constant": ("base", "envelope"),
        "ellipsoid": ("matrix", "det_floor", "envelope"),
        "polyhedron": ("normals", "offsets", "envelope"),
    }
    if family not in allowed:
        chk.fail("constraints.family", f"unknown family '{family}' (known: {', '.join(allowed)})")
    extra = sorted(set(sec) - set(allowed[family]) - {"family", "assertions"})
    if extra:
        chk.fail(f"constraints.{extra[0]}", f"not a parameter of the {family} family")
    assertions = sec.get("assertions", [])
    if not isinstance(assertions, list) or not all(isinstance(a, str) for a in assertions):
        chk.fail("constraints.assertions", "assertions must be a list of strings")

    envelope = chk.param("constraints.envelope", sec["envelope"], N) if "envelope" in sec else None
    try:
        if family == "rectangle":
            for key in ("lower", "upper"):
                if key not in sec:
                    chk.fail("constraints", f"rectangle needs '{key}'")
            lower = chk.param("constraints.lower", chk.vector("constraints.lower", sec["lower"], M), N)
            upper = chk.param("constraints.upper", chk.vector("constraints.upper", sec["upper"], M), N)
            return Rectangle(lower, upper, M), assertions
        if family == "tube":
            center = chk.param("constraints.center", chk.vector("constraints.center", sec.get("center", 0.0), M), N)
            scale = chk.param("constraints.scale", sec.get("scale", 1.0), N)
            base = _parse_base(chk, sec["base"], M) if "base" in sec else None
            return Tube(center, scale, M, base=base, envelope=envelope), assertions
        if family == "constant":
            if "base" not in sec:
                chk.fail("constraints", "constant family needs 'base'")
            return ConstantConvex(_parse_base(chk, sec["base"], M), M, envelope=envelope), assertions
        if family == "ellipsoid":
            if "matrix" not in sec:
                chk.fail("constraints", "ellipsoid needs 'matrix'")
            matrix = _coefficient(chk, "constraints.matrix", sec["matrix"], N, M)
            det_floor = chk.number("constraints.det_floor", sec.get("det_floor", 1e-10), positive=True)
            return Ellipsoid(matrix, M, det_floor=det_floor, envelope=envelope), assertions
        normals = sec.get("normals")
        offsets = sec.get("offsets")
        if not isinstance(normals, list) or not isinstance(offsets, list) or len(normals) != len(offsets):
            chk.fail("constraints.normals", "polyhedron needs equally long 'normals' and 'offsets' lists")
        offsets = [chk.param("constraints.offsets", o, N) for o in offsets]
        return Polyhedron(normals, offsets, M, envelope=envelope), assertions
    except ValidationError:
        raise
    except (ConvexPDEError, ValueError) as e:
        chk.fail("constraints.family", f"invalid {family} data: {e}")


def _expression_forcing(chk: _Checker, sec: dict, N: int, M: int) -> ForcingTerm:
    exprs = sec["expression"]
    if isinstance(exprs, str):
        exprs = [exprs]
    if not isinstance(exprs, list) or len(exprs) != M or not all(isinstance(e, str) for e in exprs):
        chk.fail("nonlinearity.expression", f"expected {M} expression strings")
    names = forcing_variables(N, M)
    try:
        compiled = [Expression(e, names) for e in exprs]
    except ValueError as e:
        chk.fail("nonlinearity.expression", str(e))

    def evaluator(points, U, Xi):
        env = {f"x{i + 1}": points[:, i] for i in range(N)}
        env.update({f"u{k + 1}": U[:, k] for k in range(M)})
        env.update({f"d{k + 1}_{i + 1}": Xi[:, k, i] for k in range(M) for i in range(N)})
        P = U.shape[0]
        return np.stack([np.broadcast_to(np.asarray(c(env), dtype=float), (P,)) for c in compiled], axis=1)

    beta = chk.param("nonlinearity.beta", sec.get("beta", 0.0), N)
    c = chk.number("nonlinearity.c", sec.get("c", 1.0), positive=True)
    return ForcingTerm(evaluator, M, N, s=sec.get("s", 1.0), q=sec.get("q", 1.0), beta=beta, c=c,
                       vectorized=True, name="expression")


def _parse_nonlinearity(chk: _Checker, doc: dict, N: int, M: int) -> ForcingTerm:
    sec = chk.section(doc, "nonlinearity", _NONLINEARITY_KEYS)
    for key in ("s", "q"):
        if key in sec:
            value = chk.number(f"nonlinearity.{key}", sec[key])
            try:
                check_exponents(value if key == "s" else 1.0, value if key == "q" else 1.0, N)
            except ConvexPDEError as e:
                chk.fail(f"nonlinearity.{key}", f"exponent bound violated: {e}")
    if ("name" in sec) == ("expression" in sec):
        chk.fail("nonlinearity", "give exactly one of 'name' and 'expression'")
    if "expression" in sec:
        if "params" in sec:
            chk.fail("nonlinearity.params", "params belong to named forcing terms")
        return _expression_forcing(chk, sec, N, M)

    for key in ("s", "q", "beta", "c"):
        if key in sec:
            chk.fail(f"nonlinearity.{key}", "growth data of a named forcing term is fixed by its definition")
    name = sec["name"]
    if name not in FORCING_REGISTRY:
        chk.fail("nonlinearity.name", f"unknown forcing '{name}' (known: {', '.join(sorted(FORCING_REGISTRY))})")
    params = sec.get("params", {})
    if not isinstance(params, dict):
        chk.fail("nonlinearity.params", "params must be an object")
    try:
        return make_forcing(name, N, M, **params)
    except (TypeError, ValueError, ConvexPDEError) as e:
        chk.fail("nonlinearity.params", str(e))


def _parse_solver(chk: _Checker, doc: dict, seed: int, dump_every: int) -> SolverConfig:
    sec = chk.section(doc, "solver", _SOLVER_KEYS)
    try:
        return SolverConfig(**sec, seed=seed, dump_every=dump_every)
    except TypeError as e:
        chk.fail("solver", str(e))
    except ValidationError as e:
        key = next((k for k in sec if k in str(e)), "solver")
        chk.fail(f"solver.{key}" if key != "solver" else key, str(e))


def _parse_truncation(chk: _Checker, doc: dict, N: int) -> Optional[TruncationSchedule]:
    if "truncation" not in doc:
        return None
    sec = chk.section(doc, "truncation", _TRUNCATION_KEYS, required=("radii", "dx"))
    try:
        return TruncationSchedule(N=N, **sec)
    except (TypeError, ValidationError) as e:
        chk.fail("truncation", str(e))


def _parse_output(chk: _Checker, doc: dict, name: str) -> OutputSection:
    sec = chk.section(doc, "output", _OUTPUT_KEYS)
    out = OutputSection(prefix=name)
    if "directory" in sec:
        out.directory = str(sec["directory"])
    if "prefix" in sec:
        out.prefix = str(sec["prefix"])
    if "dump_every" in sec:
        out.dump_every = chk.integer("output.dump_every", sec["dump_every"], 0)
    if "report" in sec:
        out.report = str(sec["report"])
    return out


def parse_config(text: str) -> ProblemConfig:
    """
    Parses and validates a problem document.

    Raises:
        ParseError: If the text is not a JSON object (with line and column)
        ValidationError: For the first semantic error (with the line of the offending key)
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError("line 1, column 1: a problem document must be a JSON object")

    chk = _Checker(text)
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        chk.fail(unknown[0], f"unknown section (allowed: {', '.join(SECTIONS)})")
    for name in REQUIRED_SECTIONS:
        if name not in doc:
            chk.fail(name, "missing required section")

    name = doc.get("name", "problem")
    if not isinstance(name, str):
        chk.fail("name", "name must be a string")
    seed = chk.integer("seed", doc.get("seed", 0), 0)

    N, grid = _parse_domain(chk, doc, "truncation" in doc)
    M, coeffs = _parse_operator(chk, doc, N)
    constraint, assertions = _parse_constraints(chk, doc, N, M)
    forcing = _parse_nonlinearity(chk, doc, N, M)
    output = _parse_output(chk, doc, name)
    solver = _parse_solver(chk, doc, seed, output.dump_every)
    truncation = _parse_truncation(chk, doc, N)
    if truncation is not None and not coeffs.constant_A:
        chk.fail("truncation", "expanding-domain runs need constant second-order coefficients")

    logger.debug("parsed problem %s: N=%d M=%d family=%s forcing=%s",
                 name, N, M, constraint.variant, forcing.name)
    return ProblemConfig(name, N, M, seed, grid, coeffs, constraint, forcing, solver, truncation,
                         output, assertions, echo=doc)


def load_config(path: str) -> ProblemConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise IOFailure(f"cannot read config {path}: {e}") from e
    return parse_config(text)


# --------------------------------------------------------------------------- built-in problems

BUILTIN_PROBLEMS: Dict[str, dict] = {
    "manufactured-1d": {
        "name": "manufactured-1d",
        "domain": {"N": 1, "R": 0.5, "n_per_axis": 128},
        "operator": {"M": 1, "diffusion": 1.0},
        "constraints": {"family": "rectangle", "lower": [0.0], "upper": [1.0]},
        "nonlinearity": {"name": "manufactured", "params": {"amplitude": 0.4, "R": 0.5}},
        "solver": {"tol_res": 1e-8},
    },
    "logistic-1d": {
        "name": "logistic-1d",
        "domain": {"N": 1, "R": 1.0, "n_per_axis": 63},
        "operator": {"M": 1, "diffusion": 1.0},
        "constraints": {"family": "rectangle", "lower": [0.0], "upper": [1.0]},
        "nonlinearity": {"name": "logistic", "params": {"mu": 20.0}},
    },
    "cooperative-2c": {
        "name": "cooperative-2c",
        "domain": {"N": 1, "R": 1.0, "n_per_axis": 31},
        "operator": {"M": 2, "diffusion": [1.0, 0.5]},
        "constraints": {"family": "rectangle", "lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "nonlinearity": {"name": "lotka_volterra", "params": {"rate": 1.0, "coupling": 0.5, "source": 2.0}},
    },
    "decaying-1d": {
        "name": "decaying-1d",
        "domain": {"N": 1},
        "operator": {"M": 1, "diffusion": 1.0, "reaction": 1.5},
        "constraints": {"family": "rectangle", "lower": [0.0], "upper": ["exp(-abs(x1))"]},
        "nonlinearity": {
            "expression": ["2.0*where(abs(x1) < 1, cos(pi*x1/2)**2, 0)*(exp(-abs(x1)) - u1)"],
            "beta": 2.0, "c": 2.0,
        },
        "truncation": {"radii": [2, 4, 6, 8, 10, 12], "dx": 0.0625, "tol_cauchy": 1e-4},
    },
    "ellipsoid-2c": {
        "name": "ellipsoid-2c",
        "domain": {"N": 1, "R": 1.0, "n_per_axis": 31},
        "operator": {"M": 2, "diffusion": 1.0},
        "constraints": {"family": "ellipsoid", "matrix": [2.0, 1.0]},
        "nonlinearity": {
            "name": "linear",
            "params": {"matrix": [[-1.0, -1.0], [0.25, -1.0]], "vector": [0.5, 0.25]},
        },
    },
}


def builtin_text(name: str) -> str:
    if name not in BUILTIN_PROBLEMS:
        raise ValidationError(f"unknown built-in problem '{name}' (known: {', '.join(sorted(BUILTIN_PROBLEMS))})")
    return json.dumps(BUILTIN_PROBLEMS[name], indent=2)


def load_builtin(name: str) -> ProblemConfig:
    return parse_config(builtin_text(name))
