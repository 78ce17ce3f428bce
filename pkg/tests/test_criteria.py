import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde.constraints import Polyhedron, Rectangle
from convexpde.criteria import (
    CriterionStatus,
    check_eigenvector_conditions,
    check_form_sign,
    check_mueller,
)
from convexpde.grid import GridDomain
from convexpde.operator import OperatorCoefficients, assemble
from convexpde.resolvent import ResolventHandle, verify_resolvent_invariance

DIAG = np.sqrt(0.5)


@pytest.fixture
def grid():
    return GridDomain(1, 1.0, 15)

@pytest.fixture
def coupled():
    """Constant symmetric coupling with eigenvector (1, 1)/sqrt(2), eigenvalue 3."""
    return OperatorCoefficients(1, 2, [[[[2.0, 1.0], [1.0, 2.0]]]])


# --- MUELLER ---

def test_mueller_passes_for_unit_box_under_diffusion(grid):
    coeffs = OperatorCoefficients.diagonal_system(1, 2, [1.0, 0.5], reaction=[0.0, 1.0])
    report = check_mueller(coeffs, grid, [0.0, 0.0], [1.0, 1.0])
    assert report.status == CriterionStatus.PASS
    assert report.margin >= 0.0
    assert all(t["status"] == "PASS" for t in report.trace_checks)

def test_mueller_fails_for_negative_reaction(grid):
    coeffs = OperatorCoefficients.diagonal_system(1, 1, [1.0], reaction=[-5.0])
    report = check_mueller(coeffs, grid, [0.0], [1.0])
    assert report.status == CriterionStatus.FAIL
    witness = report.witnesses[0]
    assert witness["matrix"] == "B_1[τ, η]"
    assert 0 <= witness["node"] < grid.n_int

def test_mueller_not_applicable_to_coupled_systems(grid, coupled):
    report = check_mueller(coupled, grid, [0.0, 0.0], [1.0, 1.0], assertions=["cooperative"])
    assert report.status == CriterionStatus.NOT_APPLICABLE
    assert report.assertions == ["cooperative"]

def test_mueller_trace_check_flags_positive_lower_bound(grid):
    coeffs = OperatorCoefficients.diagonal_system(1, 1, [1.0])
    report = check_mueller(coeffs, grid, [0.5], [1.0])
    assert report.status == CriterionStatus.FAIL
    assert report.trace_checks[0]["status"] == "FAIL"

def test_mueller_accepts_assembled_operator(grid):
    op = assemble(OperatorCoefficients.laplacian(1, 1), grid)
    assert check_mueller(op, grid, [0.0], [1.0]).passed


# --- EIGENVECTOR CONDITIONS ---

def test_eigenvector_condition_holds_along_diagonal(grid, coupled):
    report = check_eigenvector_conditions(coupled, [[DIAG, DIAG], [-DIAG, -DIAG]], grid)
    assert report.status == CriterionStatus.PASS
    assert report.scalar(0, "A11") == pytest.approx(3.0)
    assert report.scalar(1, "C") == pytest.approx(0.0)

def test_eigenvector_condition_fails_on_coordinate_axis(grid, coupled):
    report = check_eigenvector_conditions(coupled, [[1.0, 0.0]], grid)
    assert report.status == CriterionStatus.FAIL
    assert report.witnesses[0]["matrix"] == "A11"
    assert report.witnesses[0]["magnitude"] == pytest.approx(1.0)

def test_eigenvector_condition_rejects_non_unit_normal(grid, coupled):
    report = check_eigenvector_conditions(coupled, [[1.0, 1.0]], grid)
    assert report.status == CriterionStatus.FAIL

def test_eigenvector_condition_without_normals(grid, coupled):
    assert check_eigenvector_conditions(coupled, [], grid).status == CriterionStatus.NOT_APPLICABLE


# --- FORM SIGN ---

def test_form_sign_passes_for_nonnegative_offset(grid, coupled):
    report = check_form_sign(coupled, grid, [DIAG, DIAG], 1.0)
    assert report.status == CriterionStatus.PASS
    assert report.trace_checks[0]["status"] == "PASS"

def test_form_sign_fails_for_negative_offset(grid, coupled):
    report = check_form_sign(coupled, grid, [DIAG, DIAG], -1.0, assertions=["K(x) contains 0 on the boundary"])
    assert report.status == CriterionStatus.FAIL
    assert report.trace_checks[0]["status"] == "FAIL"
    assert report.assertions == ["K(x) contains 0 on the boundary"]
    assert report.to_dict()["status"] == "FAIL"

def test_form_sign_not_applicable_without_eigenvector(grid, coupled):
    report = check_form_sign(coupled, grid, [1.0, 0.0], 1.0)
    assert report.status == CriterionStatus.NOT_APPLICABLE
    assert report.witnesses

def test_form_sign_with_spatially_varying_offset(grid, coupled):
    report = check_form_sign(coupled, grid, [DIAG, DIAG], lambda x: 1.0 + x[0] ** 2)
    # -(ξ'') = -2 < 0 in the interior
    assert report.status == CriterionStatus.FAIL


# --- CRITERIA AGAINST SAMPLED INVARIANCE ---

def _sampled_invariance(coeffs, grid, field, n_samples=32, h_list=(0.2, 0.02, 0.002)):
    op = assemble(coeffs, grid)
    return verify_resolvent_invariance(ResolventHandle(op, h_list[0]), field, n_samples=n_samples,
                                       h_list=list(h_list))

def _moving_lower(x):
    return [x[0] ** 2 - 2.0]

def _moving_upper(x):
    return [2.0 - x[0] ** 2]

MUELLER_CASES = [
    (OperatorCoefficients.laplacian(1, 1), GridDomain(1, 1.0, 15), [0.0], [1.0]),
    (OperatorCoefficients.diagonal_system(1, 2, [1.0, 0.5], reaction=[0.0, 1.0]), GridDomain(1, 1.0, 15),
     [0.0, 0.0], [1.0, 1.0]),
    (OperatorCoefficients.laplacian(2, 1), GridDomain(2, 1.0, 7), [-1.0], [1.0]),
    (OperatorCoefficients.diagonal_system(1, 2, [2.0, 1.0], reaction=[1.0, 2.0], drift=[[0.5, 0.25]]),
     GridDomain(1, 1.0, 15), [-1.0, 0.0], [0.0, 2.0]),
    (OperatorCoefficients.laplacian(1, 1), GridDomain(1, 1.0, 15), _moving_lower, _moving_upper),
]

@pytest.mark.parametrize("coeffs,domain,sigma,tau", MUELLER_CASES)
def test_mueller_pass_implies_sampled_invariance(coeffs, domain, sigma, tau):
    assert check_mueller(coeffs, domain, sigma, tau).status == CriterionStatus.PASS
    report = _sampled_invariance(coeffs, domain, Rectangle(sigma, tau, coeffs.M))
    assert report.passed
    assert max(row.worst_distance for row in report.rows) <= 1e-8

def test_half_space_criteria_imply_sampled_invariance(grid, coupled):
    normals = [[DIAG, DIAG], [-DIAG, -DIAG]]
    assert check_eigenvector_conditions(coupled, normals, grid).status == CriterionStatus.PASS
    for p in normals:
        assert check_form_sign(coupled, grid, p, 1.0).status == CriterionStatus.PASS
    report = _sampled_invariance(coupled, grid, Polyhedron(normals, [1.0, 1.0], 2))
    assert report.passed
    assert max(row.worst_distance for row in report.rows) <= 1e-8

@pytest.mark.parametrize("A", [
    [[1.0, 0.9], [0.0, 1.0]],
    [[1.0, 0.0], [0.9, 1.0]],
    [[2.0, 1.0], [1.0, 2.0]],
])
def test_coupled_diffusion_leaves_the_unit_square(A):
    coeffs = OperatorCoefficients(1, 2, [[A]])
    domain = GridDomain(1, 1.0, 31)
    box_normals = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    assert check_mueller(coeffs, domain, [0.0, 0.0], [1.0, 1.0]).status == CriterionStatus.NOT_APPLICABLE
    assert check_eigenvector_conditions(coeffs, box_normals, domain).status == CriterionStatus.FAIL
    report = _sampled_invariance(coeffs, domain, Rectangle([0.0, 0.0], [1.0, 1.0], 2), n_samples=64,
                                 h_list=(0.2,))
    assert not report.passed
    witness = report.witness()
    assert witness is not None
    assert witness.worst_distance > 1e-2
    assert 0 <= witness.witness_node < domain.n_int
    assert 0 <= witness.witness_sample < 64
