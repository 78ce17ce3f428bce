import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde.constraints import Rectangle
from convexpde.errors import ExponentOutOfRange, NonFiniteForcing
from convexpde.grid import GridDomain, VectorField
from convexpde.nonlinearity import (
    FORCING_REGISTRY,
    ForcingTerm,
    audit_growth,
    audit_tangency,
    check_exponents,
    compute_apriori_exponents,
    exponent_bounds,
    make_forcing,
    manufactured_source,
    register_forcing,
    superpose,
)


@pytest.fixture
def grid():
    return GridDomain(1, 1.0, 15)

@pytest.fixture
def unit_interval():
    return Rectangle([0.0], [1.0], 1)


# --- EXPONENTS ---

def test_exponent_bounds_by_dimension():
    assert exponent_bounds(1) == (5.0, pytest.approx(5.0 / 3.0))
    assert exponent_bounds(3) == (pytest.approx(7.0 / 3.0), pytest.approx(1.4))

def test_exponent_above_bound_rejected():
    with pytest.raises(ExponentOutOfRange):
        check_exponents(3.0, 1.0, 3)
    with pytest.raises(ExponentOutOfRange):
        check_exponents(1.0, 1.5, 3)
    with pytest.raises(ExponentOutOfRange):
        check_exponents(0.5, 1.0, 1)

def test_apriori_exponents_one_dimension():
    exps = compute_apriori_exponents(1.5, 1.1, 1)
    assert exps.theta1 == pytest.approx(1.0 / 6.0)
    assert exps.gamma1 == pytest.approx(0.125)
    assert exps.theta2 == pytest.approx(0.1 / 2.2)
    assert exps.gamma2 == pytest.approx(1.1 * (1.0 + 0.1 / 2.2) / 2.0)
    assert exps.p_embed == pytest.approx(2.2)

def test_apriori_exponents_three_dimensions():
    gamma1, gamma2, p_embed = compute_apriori_exponents(2.0, 1.1, 3)
    assert gamma1 == pytest.approx(0.75)
    assert gamma2 < 1.0
    assert 2.0 <= p_embed < 3.0

def _closest(grid, residual):
    return float(grid[np.argmin(np.abs(residual(grid)))])

def test_apriori_exponents_agree_with_a_brute_force_search():
    rng = np.random.default_rng(7)
    thetas = np.linspace(0.0, 2.0, 200_001)
    ps = np.linspace(2.0, 8.0, 600_001)
    for _ in range(50):
        N = int(rng.integers(1, 7))
        s_max, q_max = exponent_bounds(N)
        s = 1.0 + (s_max - 1.0) * rng.uniform(0.0, 0.99)
        q = 1.0 + (q_max - 1.0) * rng.uniform(0.0, 0.99)
        exps = compute_apriori_exponents(s, q, N)

        weight = 1.0 if N >= 5 else 0.5
        theta1 = _closest(thetas, lambda t: weight * s * t - N * (s - 1.0) / 4.0)
        theta2 = _closest(thetas, lambda t: q * t / 2.0 - N * (q - 1.0) / 4.0)
        assert exps.theta1 == pytest.approx(theta1, abs=2e-5)
        assert exps.theta2 == pytest.approx(theta2, abs=2e-5)
        assert exps.gamma1 == pytest.approx(weight * s * theta1, abs=1e-4)
        assert exps.gamma2 == pytest.approx(q * (1.0 + theta2) / 2.0, abs=1e-4)
        admissible = ps[(ps >= 2.0 * q) & (1.0 / ps <= 1.0 / (2.0 * s) + 1.0 / N)]
        assert exps.p_embed == pytest.approx(float(admissible[0]), abs=2e-5)

        assert exps.gamma1 < 1.0 and exps.gamma2 < 1.0
        assert exps.p_embed >= 2.0
        if N >= 3:
            assert exps.p_embed < min(2.0 * N / (N - 2.0), N)

def test_apriori_exponents_reject_bad_input():
    with pytest.raises(ExponentOutOfRange):
        compute_apriori_exponents(3.0, 1.0, 3)


# --- SUPERPOSITION ---

def test_logistic_superposition(grid):
    f = make_forcing("logistic", 1, 1, mu=4.0)
    u = VectorField(grid, np.full(grid.n_int, 0.5))
    np.testing.assert_allclose(superpose(f, u).values, 1.0)

def test_pointwise_evaluator_sees_gradient(grid):
    f = ForcingTerm(lambda x, u, xi: [xi[0, 0]], 1, 1)
    u = VectorField(grid, grid.points[:, 0])
    out = superpose(f, u)
    assert out.values[grid.n_int // 2, 0] == pytest.approx(1.0)

def test_gradient_argument_is_one_sided_next_to_the_boundary():
    g = GridDomain(1, 1.0, 3)
    f = ForcingTerm(lambda x, u, xi: xi[:, :, 0], 1, 1, vectorized=True)
    out = superpose(f, VectorField(g, g.points[:, 0]))
    # u = x on nodes -0.5, 0, 0.5 with zero boundary values, dx = 0.5
    np.testing.assert_allclose(out.values[:, 0], [-1.0, 1.0, -1.0])

def test_non_finite_forcing(grid):
    f = ForcingTerm(lambda x, u, xi: [np.nan if x[0] > 0.5 else 0.0], 1, 1)
    with pytest.raises(NonFiniteForcing):
        superpose(f, VectorField.zeros(grid, 1))

def test_manufactured_source_profile():
    pts = np.array([[0.0], [-0.5], [0.5]])
    np.testing.assert_allclose(manufactured_source(pts), [np.pi ** 2 * 0.4, 0.0, 0.0], atol=1e-12)

def test_growth_constant_must_be_positive():
    with pytest.raises(ValueError):
        ForcingTerm(lambda x, u, xi: u, 1, 1, c=0.0)


# --- REGISTRY ---

def test_registry_holds_builtins():
    for name in ("zero", "logistic", "lotka_volterra", "linear", "manufactured"):
        assert name in FORCING_REGISTRY

def test_unknown_forcing():
    with pytest.raises(KeyError):
        make_forcing("nonexistent", 1, 1)

def test_duplicate_registration_rejected():
    with pytest.raises(ValueError):
        register_forcing("logistic")(lambda N, M: None)

def test_lotka_volterra_needs_two_components():
    with pytest.raises(ValueError):
        make_forcing("lotka_volterra", 1, 1)


# --- AUDITS ---

def test_logistic_is_tangent_to_unit_interval(grid, unit_interval):
    report = audit_tangency(make_forcing("logistic", 1, 1, mu=20.0), unit_interval, grid, n_boundary_samples=200)
    assert report.passed
    assert report.n_checked == 200

def test_constant_push_fails_tangency_at_upper_face(grid, unit_interval):
    f = ForcingTerm(lambda x, U, Xi: np.full_like(U, 10.0), 1, 1, beta=10.0, vectorized=True)
    report = audit_tangency(f, unit_interval, grid, n_boundary_samples=200)
    assert report.status == "FAIL"
    assert report.witness["u"] == [1.0]
    assert report.witness["f"] == [10.0]

def test_lotka_volterra_is_tangent_to_unit_square(grid):
    f = make_forcing("lotka_volterra", 1, 2, rate=1.0, coupling=0.5, source=2.0)
    report = audit_tangency(f, Rectangle([0.0, 0.0], [1.0, 1.0], 2), grid, n_boundary_samples=300)
    assert report.passed

def test_logistic_growth_audit_passes(grid, unit_interval):
    report = audit_growth(make_forcing("logistic", 1, 1, mu=20.0), unit_interval, grid, n_samples=500)
    assert report.status == "PASS"
    assert report.n_checked == 500
    assert report.worst_ratio <= 1.0

def test_understated_growth_fails(grid, unit_interval):
    f = ForcingTerm(lambda x, U, Xi: np.full_like(U, 100.0), 1, 1, beta=0.0, c=1.0, vectorized=True)
    report = audit_growth(f, unit_interval, grid, n_samples=200)
    assert report.status == "FAIL"
    assert report.witness is not None
    assert report.to_dict()["worst_ratio"] > 1.0
