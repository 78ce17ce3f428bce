import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde.constraints import Rectangle
from convexpde.errors import InadmissibleStep
from convexpde.grid import GridDomain, VectorField, l2_norm
from convexpde.operator import OperatorCoefficients, assemble
from convexpde.resolvent import (
    ResolventHandle,
    apply_resolvent,
    sample_generator_tangency,
    sample_projection_inequality,
    semigroup_step,
    smooth_field,
    verify_resolvent_invariance,
)


@pytest.fixture
def laplacian_1d():
    return assemble(OperatorCoefficients.laplacian(1, 1), GridDomain(1, 1.0, 31))


# --- RESOLVENT ---

def test_single_node_resolvent_by_hand():
    # one interior node with dx = 0.5: S = [8]
    op = assemble(OperatorCoefficients.laplacian(1, 1), GridDomain(1, 0.5, 1))
    assert op.S.toarray()[0, 0] == pytest.approx(8.0)
    rh = ResolventHandle(op, 0.1)
    u = VectorField(op.grid, np.array([1.0]))
    assert apply_resolvent(rh, u).values[0, 0] == pytest.approx(1.0 / 1.8)

@pytest.mark.parametrize("h,omega", [(0.0, 0.0), (-0.1, 0.0), (0.5, 2.0), (1.0, 1.5)])
def test_inadmissible_steps(laplacian_1d, h, omega):
    with pytest.raises(InadmissibleStep):
        ResolventHandle(laplacian_1d, h, omega)

def test_resolvent_solves_the_shifted_system(laplacian_1d):
    rh = ResolventHandle(laplacian_1d, 0.05)
    rng = np.random.default_rng(1)
    f = VectorField(laplacian_1d.grid, rng.standard_normal(laplacian_1d.grid.n_int))
    u = rh.apply(f)
    residual = u.flat() + 0.05 * (laplacian_1d.S @ u.flat()) - f.flat()
    assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(f.flat())

def test_semigroup_step_zero_time_is_identity(laplacian_1d):
    rh = ResolventHandle(laplacian_1d, 0.1)
    u = VectorField(laplacian_1d.grid, np.ones(laplacian_1d.grid.n_int))
    np.testing.assert_array_equal(semigroup_step(rh, u, 0.0, 10).values, u.values)

def test_semigroup_step_decays_positive_data(laplacian_1d):
    rh = ResolventHandle(laplacian_1d, 0.01)
    u = VectorField(laplacian_1d.grid, np.ones(laplacian_1d.grid.n_int))
    out = semigroup_step(rh, u, 0.1, 10)
    assert np.all(out.values > 0.0)
    assert out.sup_norm() < 1.0

def test_resolvent_identity(laplacian_1d):
    h, mu = 0.2, 0.1
    Jh, Jmu = ResolventHandle(laplacian_1d, h), ResolventHandle(laplacian_1d, mu)
    u = VectorField(laplacian_1d.grid, smooth_field(laplacian_1d.grid, 1, np.random.default_rng(4)))
    lhs = Jh.apply(u)
    rhs = Jmu.apply(u.with_values((mu / h) * u.values + (1.0 - mu / h) * lhs.values))
    np.testing.assert_allclose(rhs.values, lhs.values, atol=1e-10 * (1.0 + u.sup_norm()))

def test_heat_decay_of_the_first_dirichlet_mode(laplacian_1d):
    grid = laplacian_1d.grid
    u = VectorField.from_function(grid, lambda x: np.sin(np.pi * (x[0] + grid.R) / (2.0 * grid.R)))
    lam = (np.pi / (2.0 * grid.R)) ** 2
    out = semigroup_step(ResolventHandle(laplacian_1d, 0.1 / 64), u, 0.1, 64)
    np.testing.assert_allclose(out.values, np.exp(-lam * 0.1) * u.values, rtol=0.02)

def test_resolvent_tends_to_the_identity(laplacian_1d):
    u = VectorField(laplacian_1d.grid, smooth_field(laplacian_1d.grid, 1, np.random.default_rng(5)))
    gaps = [l2_norm(u.with_values(ResolventHandle(laplacian_1d, h).apply(u).values - u.values))
            for h in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.1 * gaps[0]

def test_resolvent_is_an_l2_contraction(laplacian_1d):
    rng = np.random.default_rng(6)
    for h in (0.5, 0.05, 0.005):
        rh = ResolventHandle(laplacian_1d, h)
        assert rh.bound_factor() == 1.0
        for _ in range(20):
            u = VectorField(laplacian_1d.grid, rng.standard_normal(laplacian_1d.grid.n_int))
            assert l2_norm(rh.apply(u)) <= l2_norm(u) * (1.0 + 1e-12)


# --- SAMPLED INVARIANCE ---

def test_unit_interval_is_invariant_under_dirichlet_laplacian(laplacian_1d):
    rh = ResolventHandle(laplacian_1d, 0.01)
    report = verify_resolvent_invariance(rh, Rectangle([0.0], [1.0], 1), n_samples=16, h_list=[0.1, 0.01, 0.001])
    assert report.passed
    assert [row.h for row in report.rows] == [0.1, 0.01, 0.001]
    assert report.witness() is None

def test_discrete_maximum_principle_is_exact(laplacian_1d):
    rh = ResolventHandle(laplacian_1d, 0.2)
    report = verify_resolvent_invariance(rh, Rectangle([0.0], [1.0], 1), n_samples=1000, h_list=[0.2, 0.1, 0.05])
    assert report.passed
    assert all(row.worst_distance <= 1e-12 for row in report.rows)

def test_interval_excluding_zero_fails_with_witness(laplacian_1d):
    rh = ResolventHandle(laplacian_1d, 0.01)
    report = verify_resolvent_invariance(rh, Rectangle([0.5], [1.0], 1), n_samples=8)
    assert not report.passed
    witness = report.witness()
    assert witness is not None
    assert witness.witness_node is not None
    assert 0 <= witness.witness_sample < 8
    data = report.to_dict()
    assert data["status"] == "FAIL"
    assert data["rows"][0]["status"] == "FAIL"

def test_report_is_identical_for_any_worker_count(laplacian_1d):
    rh = ResolventHandle(laplacian_1d, 0.01)
    field = Rectangle([0.5], [1.0], 1)
    serial = verify_resolvent_invariance(rh, field, n_samples=12, h_list=[0.1, 0.01], seed=3, workers=1)
    threaded = verify_resolvent_invariance(rh, field, n_samples=12, h_list=[0.1, 0.01], seed=3, workers=4)
    assert serial.to_dict() == threaded.to_dict()


# --- FURTHER CHARACTERIZATIONS ---

def test_projection_form_inequality_for_unit_interval(laplacian_1d):
    report = sample_projection_inequality(laplacian_1d, Rectangle([0.0], [1.0], 1), n_samples=8)
    assert report.status == "PASS"
    assert report.witness_sample is None

def test_generator_tangency_for_unit_interval(laplacian_1d):
    report = sample_generator_tangency(laplacian_1d, Rectangle([0.0], [1.0], 1), n_samples=8)
    assert report.status == "PASS"
    assert report.to_dict()["name"] == "generator_tangency"

def test_generator_tangency_fails_when_zero_is_excluded(laplacian_1d):
    report = sample_generator_tangency(laplacian_1d, Rectangle([0.5], [1.0], 1), n_samples=32)
    assert report.status == "FAIL"
    assert report.witness_node is not None
