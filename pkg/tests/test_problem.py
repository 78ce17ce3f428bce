import json
import os
import sys
import tempfile

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde.constraints import Ellipsoid, Rectangle
from convexpde.errors import InvalidConstraint, IOFailure, ParseError, ValidationError
from convexpde.problem import (
    BUILTIN_PROBLEMS,
    builtin_text,
    compile_expression,
    load_builtin,
    load_config,
    parse_config,
)


def base_doc(**changes):
    doc = {
        "name": "unit",
        "domain": {"N": 1, "R": 1.0, "n_per_axis": 15},
        "operator": {"M": 1, "diffusion": 1.0},
        "constraints": {"family": "rectangle", "lower": [0.0], "upper": [1.0]},
        "nonlinearity": {"name": "logistic", "params": {"mu": 2.0}},
    }
    doc.update(changes)
    return doc


def parse(doc):
    return parse_config(json.dumps(doc, indent=2))


# --- EXPRESSIONS ---

def test_expression_evaluates_with_numpy_functions():
    expr = compile_expression("sin(pi*x1/2) + maximum(x1, 0)", ["x1"])
    assert expr({"x1": 1.0}) == pytest.approx(2.0)
    np.testing.assert_allclose(expr({"x1": np.array([0.0, -1.0])}), [0.0, -1.0])

@pytest.mark.parametrize("source", [
    "__import__('os')",
    "x1.real",
    "y + 1",
    "[x1]",
    "lambda: 1",
    "'text'",
    "x1 +",
])
def test_expression_rejects_anything_outside_the_whitelist(source):
    with pytest.raises(ValueError):
        compile_expression(source, ["x1"])


# --- PARSING ---

def test_minimal_document():
    problem = parse(base_doc())
    assert (problem.name, problem.N, problem.M) == ("unit", 1, 1)
    assert problem.grid.n_per_axis == 15
    assert isinstance(problem.constraint, Rectangle)
    assert problem.forcing.name == "logistic"
    assert problem.truncation is None
    assert problem.output.prefix == "unit"
    assert problem.solver.seed == 0

def test_invalid_json_reports_line_and_column():
    with pytest.raises(ParseError) as exc:
        parse_config('{\n  "name": \n}')
    assert str(exc.value).startswith("line 3, column 1")

def test_document_must_be_an_object():
    with pytest.raises(ParseError):
        parse_config("[1, 2]")

def test_missing_constraints_section():
    doc = base_doc()
    del doc["constraints"]
    with pytest.raises(ValidationError) as exc:
        parse(doc)
    assert "constraints" in str(exc.value)

def test_unknown_key_reports_its_line():
    text = '{\n  "domain": {"N": 1, "R": 1.0, "n_per_axis": 5},\n  "operator": {"M": 1, "colour": 2},\n' \
           '  "constraints": {"family": "rectangle", "lower": 0, "upper": 1},\n' \
           '  "nonlinearity": {"name": "zero"}\n}'
    with pytest.raises(ValidationError) as exc:
        parse_config(text)
    assert str(exc.value).startswith("line 3: operator.colour")

def test_superlinear_exponent_rejected_in_three_dimensions():
    doc = base_doc(domain={"N": 3, "R": 1.0, "n_per_axis": 3},
                   nonlinearity={"expression": "u1", "s": 3.0})
    with pytest.raises(ValidationError) as exc:
        parse(doc)
    assert "exponent bound violated" in str(exc.value)

def test_component_counts_must_agree():
    doc = base_doc(operator={"M": 2, "diffusion": 1.0})
    with pytest.raises(ValidationError):
        parse(doc)

def test_domain_needs_exactly_one_resolution():
    with pytest.raises(ValidationError):
        parse(base_doc(domain={"N": 1, "R": 1.0}))
    with pytest.raises(ValidationError):
        parse(base_doc(domain={"N": 1, "R": 1.0, "n_per_axis": 7, "dx": 0.25}))

def test_domain_from_spacing():
    problem = parse(base_doc(domain={"N": 1, "R": 1.0, "dx": 0.25}))
    assert problem.grid.n_per_axis == 7
    with pytest.raises(ValidationError):
        parse(base_doc(domain={"N": 1, "R": 1.0, "dx": 0.3}))

def test_named_forcing_growth_is_fixed():
    with pytest.raises(ValidationError):
        parse(base_doc(nonlinearity={"name": "logistic", "c": 5.0}))
    with pytest.raises(ValidationError):
        parse(base_doc(nonlinearity={"name": "no_such_forcing"}))

def test_invalid_solver_value_names_the_key():
    with pytest.raises(ValidationError) as exc:
        parse(base_doc(solver={"damping": 2.0}))
    assert "solver.damping" in str(exc.value)

def test_crossing_rectangle_fails_when_bound_to_the_grid():
    problem = parse(base_doc(constraints={"family": "rectangle", "lower": [1.0], "upper": [0.0]}))
    with pytest.raises(InvalidConstraint):
        problem.constraint.bind(problem.grid)

def test_expression_constraint_and_forcing():
    doc = base_doc(constraints={"family": "rectangle", "lower": 0.0, "upper": "1 + x1**2"},
                   nonlinearity={"expression": "x1 * u1 + d1_1", "beta": 1.0, "c": 2.0})
    problem = parse(doc)
    pts = np.array([[0.5], [1.0]])
    U = np.array([[2.0], [3.0]])
    Xi = np.array([[[1.0]], [[0.0]]])
    np.testing.assert_allclose(problem.forcing.evaluate(pts, U, Xi), [[2.0], [3.0]])
    assert problem.forcing.c == 2.0

def test_truncation_section_replaces_the_box():
    doc = base_doc(domain={"N": 1}, truncation={"radii": [2, 4], "dx": 0.25})
    problem = parse(doc)
    assert problem.grid is None
    assert problem.primary_grid().R == 2.0
    assert problem.truncation.radii == [2.0, 4.0]

def test_replacing_grid_and_solver_settings():
    problem = parse(base_doc())
    finer = problem.with_grid_n(31)
    assert finer.grid.n_per_axis == 31
    assert finer.grid.R == problem.grid.R
    assert problem.grid.n_per_axis == 15
    assert problem.with_solver(tol_res=1e-4).solver.tol_res == 1e-4


# --- FILES AND BUILT-INS ---

@pytest.mark.parametrize("name", sorted(BUILTIN_PROBLEMS))
def test_builtin_problems_parse(name):
    problem = load_builtin(name)
    assert problem.name == name
    assert problem.primary_grid().N == problem.N

def test_builtin_ellipsoid_family():
    problem = load_builtin("ellipsoid-2c")
    assert isinstance(problem.constraint, Ellipsoid)
    assert problem.M == 2

def test_unknown_builtin():
    with pytest.raises(ValidationError):
        builtin_text("nope")

def test_load_config_from_file():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "problem.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write(builtin_text("logistic-1d"))
        assert load_config(path).name == "logistic-1d"

def test_load_config_missing_file():
    with pytest.raises(IOFailure):
        load_config("/nonexistent/problem.json")
