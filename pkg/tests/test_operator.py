import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde.errors import EllipticityViolation, GridMismatch, NonFiniteCoefficient
from convexpde.grid import GridDomain, VectorField
from convexpde.operator import (
    OperatorCoefficients,
    assemble,
    bilinear_form,
    ellipticity_constants,
    estimate_garding,
    evaluate_form,
    quadrature_form,
    verify_garding,
)


@pytest.fixture
def coupled_2d():
    """Variable, strongly coupled coefficients with mixed terms, drift and reaction."""
    def a11(x):
        return [[1.0 + 0.2 * np.sin(x[0]), 0.1], [0.1, 1.5]]

    A = [[a11, [[0.1, 0.0], [0.0, 0.1]]],
         [[[0.1, 0.0], [0.0, 0.1]], [[2.0, 0.0], [0.0, 1.0 + 0.1 * 0.5]]]]
    B = [lambda x: [[0.3 * x[1], 0.0], [0.1, -0.2]], None]
    C = [[0.5, -0.1], [0.2, 0.4]]
    return OperatorCoefficients(2, 2, A, B, C)


# --- ASSEMBLY ---

def test_one_dimensional_laplacian_stencil():
    grid = GridDomain(1, 1.0, 3)
    op = assemble(OperatorCoefficients.laplacian(1, 1), grid)
    expected = 4.0 * np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    np.testing.assert_allclose(op.S.toarray(), expected)
    assert op.is_symmetric()
    assert op.theta == pytest.approx(1.0)

def test_diagonal_system_is_block_diagonal():
    grid = GridDomain(1, 1.0, 4)
    coeffs = OperatorCoefficients.diagonal_system(1, 2, [1.0, 0.5], reaction=[1.0, 2.0])
    assert coeffs.diagonal
    S = assemble(coeffs, grid).S.toarray()
    # no coupling between the two components
    assert np.all(S[0::2, 1::2] == 0.0)
    assert np.all(S[1::2, 0::2] == 0.0)

def test_full_matrix_coefficient_is_not_diagonal(coupled_2d):
    assert not coupled_2d.diagonal
    assert not coupled_2d.constant_A

def test_bilinear_form_matches_direct_quadrature(coupled_2d):
    grid = GridDomain(2, 1.0, 5)
    op = assemble(coupled_2d, grid)
    rng = np.random.default_rng(0)
    for _ in range(3):
        u = VectorField(grid, rng.standard_normal((grid.n_int, 2)))
        v = VectorField(grid, rng.standard_normal((grid.n_int, 2)))
        assert bilinear_form(op, u, v) == pytest.approx(quadrature_form(coupled_2d, grid, u, v), rel=1e-10, abs=1e-10)

def test_hat_function_at_the_centre_node():
    grid = GridDomain(1, 0.5, 3)
    op = assemble(OperatorCoefficients.laplacian(1, 1), grid)
    hat = VectorField(grid, np.array([0.0, 1.0, 0.0]))
    assert grid.dx == 0.25
    assert bilinear_form(op, hat, hat) == pytest.approx(8.0)

def test_form_is_bounded_by_the_continuity_constant(coupled_2d):
    grid = GridDomain(2, 1.0, 5)
    op = assemble(coupled_2d, grid)
    assert op.continuity > 0.0
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = VectorField(grid, rng.standard_normal((grid.n_int, 2)))
        v = VectorField(grid, rng.standard_normal((grid.n_int, 2)))
        form = evaluate_form(op, u, v)
        assert form.value == pytest.approx(bilinear_form(op, u, v))
        assert form.continuity == op.continuity
        assert abs(form.value) <= form.bound
    assert evaluate_form(op, u, u).to_dict()["continuity"] == op.continuity

def test_stencil_is_second_order_consistent():
    # P[u] = -(a u')' + b u' + u with a = 1 + x^2/2, b = 0.3 and u = sin(k(x + 1)), k = π/2
    k = np.pi / 2.0
    coeffs = OperatorCoefficients(1, 1, [[lambda x: 1.0 + 0.5 * x[0] ** 2]], B=[0.3], C=1.0, diagonal=True)

    def exact(x):
        u, du, d2u = np.sin(k * (x + 1.0)), k * np.cos(k * (x + 1.0)), -k ** 2 * np.sin(k * (x + 1.0))
        return -(x * du + (1.0 + 0.5 * x ** 2) * d2u) + 0.3 * du + u

    errors = []
    for n in (15, 31, 63, 127):
        grid = GridDomain(1, 1.0, n)
        u = VectorField.from_function(grid, lambda x: np.sin(k * (x[0] + 1.0)))
        Su = assemble(coeffs, grid).apply(u).values[:, 0]
        errors.append(float(np.max(np.abs(Su - exact(grid.points[:, 0])))))
    orders = [np.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(orders) >= 1.8

def test_from_arrays_matches_table():
    A = np.zeros((1, 1, 2, 2))
    A[0, 0] = [[2.0, 0.5], [0.5, 1.0]]
    coeffs = OperatorCoefficients.from_arrays(A, C=np.eye(2))
    np.testing.assert_allclose(coeffs.second_order(0, 0, [0.0]), [[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(coeffs.reaction([0.3]), np.eye(2))


# --- VALIDATION ---

def test_negative_diffusion_violates_ellipticity():
    with pytest.raises(EllipticityViolation):
        assemble(OperatorCoefficients.laplacian(1, 1, scale=-1.0), GridDomain(1, 1.0, 5))

def test_non_finite_coefficient():
    coeffs = OperatorCoefficients(1, 1, [[lambda x: np.nan]], diagonal=True)
    with pytest.raises(NonFiniteCoefficient):
        assemble(coeffs, GridDomain(1, 1.0, 5))

def test_dimension_mismatch():
    with pytest.raises(GridMismatch):
        assemble(OperatorCoefficients.laplacian(2, 1), GridDomain(1, 1.0, 5))

def test_ellipticity_constants_of_laplacian():
    grid = GridDomain(2, 1.0, 3)
    theta, theta_lh = ellipticity_constants(OperatorCoefficients.laplacian(2, 2), grid.points)
    assert theta == pytest.approx(1.0)
    assert theta_lh == pytest.approx(1.0)


# --- SPECTRUM AND GARDING ---

def test_spectral_bounds_of_small_laplacian():
    op = assemble(OperatorCoefficients.laplacian(1, 1), GridDomain(1, 1.0, 3))
    lo, hi = op.spectral_bounds()
    assert lo == pytest.approx(4.0 * (2.0 - np.sqrt(2.0)))
    assert hi == pytest.approx(4.0 * (2.0 + np.sqrt(2.0)))

def test_coercive_operator_needs_no_shift():
    op = assemble(OperatorCoefficients.laplacian(1, 1), GridDomain(1, 1.0, 15))
    cert = estimate_garding(op)
    assert cert.omega == 0.0
    assert cert.alpha > 0.0

def test_negative_reaction_needs_a_shift():
    coeffs = OperatorCoefficients(1, 1, [[1.0]], C=-50.0)
    op = assemble(coeffs, GridDomain(1, 1.0, 15))
    omega, alpha = estimate_garding(op)
    assert omega > 0.0
    assert verify_garding(op, omega, alpha, n_samples=200, seed=5) >= -1e-9

def test_negative_reaction_shifts_omega_by_its_size():
    grid = GridDomain(1, 1.0, 15)
    base = estimate_garding(assemble(OperatorCoefficients(1, 1, [[1.0]], C=-50.0), grid), alpha=0.5)
    shifted = estimate_garding(assemble(OperatorCoefficients(1, 1, [[1.0]], C=-53.0), grid), alpha=0.5)
    assert base.omega > 0.0
    assert shifted.omega == pytest.approx(base.omega + 3.0, rel=1e-8)

def test_factorization_is_cached():
    op = assemble(OperatorCoefficients.laplacian(1, 1), GridDomain(1, 1.0, 7))
    assert op.factorization(0.1) is op.factorization(0.1)
    assert op.factorization(0.1) is not op.factorization(0.2)
