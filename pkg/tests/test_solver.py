import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde.constraints import Rectangle
from convexpde.errors import InadmissibleStep, InvarianceRefused, ValidationError
from convexpde.grid import GridDomain, VectorField
from convexpde.nonlinearity import ForcingTerm, make_forcing, manufactured_source
from convexpde.operator import OperatorCoefficients, assemble
from convexpde.problem import load_builtin
from convexpde.resolvent import ResolventHandle
from convexpde.solver import (
    SolverConfig,
    Termination,
    default_h_schedule,
    phi_step,
    residual_norm,
    solve,
)


@pytest.fixture
def laplacian():
    """Dirichlet Laplacian on [-0.5, 0.5], where the manufactured forcing is tangent to [0, 1]."""
    return assemble(OperatorCoefficients.laplacian(1, 1), GridDomain(1, 0.5, 31))

@pytest.fixture
def unit_interval():
    return Rectangle([0.0], [1.0], 1)


# --- CONFIG ---

def test_config_rejects_increasing_schedule():
    with pytest.raises(ValidationError):
        SolverConfig(h_schedule=[0.01, 0.1])

def test_config_rejects_bad_damping_and_homotopy():
    with pytest.raises(ValidationError):
        SolverConfig(damping=0.0)
    with pytest.raises(ValidationError):
        SolverConfig(homotopy=[0.0, 0.5])
    with pytest.raises(ValidationError):
        SolverConfig(L_retract=0.5)

def test_default_schedule_scales_with_lowest_eigenvalue(laplacian):
    lo, _ = laplacian.spectral_bounds()
    hs = default_h_schedule(laplacian)
    assert len(hs) == 4
    assert hs[0] == pytest.approx(0.2 / lo)
    assert all(b < a for a, b in zip(hs, hs[1:]))


# --- SOLVE ---

def test_manufactured_problem_converges(laplacian, unit_interval):
    f = make_forcing("manufactured", 1, 1)
    report = solve(laplacian, None, unit_interval, f, SolverConfig(tol_res=1e-6, max_iters=2000))
    assert report.termination == Termination.CONVERGED
    assert report.converged
    assert report.residual <= 1e-6
    assert report.violation == 0.0
    assert np.all(report.u.values >= 0.0) and np.all(report.u.values <= 1.0)
    assert residual_norm(laplacian, f, report.u) == pytest.approx(report.residual)
    report.raise_for_status()

def test_every_stage_satisfies_its_certificate(laplacian, unit_interval):
    f = make_forcing("manufactured", 1, 1)
    report = solve(laplacian, None, unit_interval, f, SolverConfig(tol_res=1e-6, max_iters=2000))
    assert len(report.stages) == 8
    assert all(block.certificate_holds for block in report.stages)
    hs = [h for h, _ in report.residual_vs_h()]
    assert len(hs) == 4
    assert hs == sorted(hs, reverse=True)

def test_solution_is_a_fixed_point_of_phi(laplacian, unit_interval):
    f = make_forcing("manufactured", 1, 1)
    report = solve(laplacian, None, unit_interval, f, SolverConfig(tol_res=1e-7, max_iters=2000))
    rh = ResolventHandle(laplacian, report.stages[-1].h)
    phi = phi_step(rh, unit_interval, f, report.u, 1.0)
    np.testing.assert_allclose(phi.values, report.u.values, atol=1e-8)

def test_zero_initial_residual_returns_immediately(laplacian, unit_interval):
    report = solve(laplacian, None, unit_interval, make_forcing("logistic", 1, 1, mu=5.0), SolverConfig())
    assert report.converged
    assert report.residual == 0.0
    assert report.stages == []

def test_callback_receives_iterates(laplacian, unit_interval):
    calls = []
    cfg = SolverConfig(tol_res=1e-6, max_iters=2000, dump_every=10)
    solve(laplacian, None, unit_interval, make_forcing("manufactured", 1, 1), cfg,
          callback=lambda stage, iteration, u: calls.append((stage, iteration)))
    assert calls
    stages = [stage for stage, _ in calls]
    assert stages == sorted(stages)
    assert stages[-1] == 7

def damped_newton(S, g, tol=1e-10, max_steps=50):
    """Dense damped Newton on S u = g (1 - u), the manufactured problem with its constraint inactive."""
    def residual(v):
        return S @ v - g * (1.0 - v)

    jacobian = S + np.diag(g)
    u = np.zeros_like(g)
    for _ in range(max_steps):
        r = residual(u)
        if np.linalg.norm(r) <= tol:
            break
        step = np.linalg.solve(jacobian, -r)
        damping, size = 1.0, np.linalg.norm(r)
        while np.linalg.norm(residual(u + damping * step)) > (1.0 - 0.5 * damping) * size and damping > 1e-4:
            damping *= 0.5
        u = u + damping * step
    return u

def test_manufactured_problem_matches_dense_newton():
    problem = load_builtin("manufactured-1d").with_solver(dump_every=1)
    grid = problem.primary_grid()
    assert grid.n_per_axis == 128
    op = assemble(problem.coeffs, grid)
    extremes = []

    def record(stage, iteration, u):
        extremes.append((float(u.values.min()), float(u.values.max())))

    report = solve(op, None, problem.constraint, problem.forcing, problem.solver, callback=record)
    assert report.converged
    assert report.residual <= 1e-8
    assert extremes
    assert all(lo >= 0.0 and hi <= 1.0 for lo, hi in extremes)

    oracle = damped_newton(op.S.toarray(), manufactured_source(grid.points))
    assert np.all((oracle >= 0.0) & (oracle <= 1.0))
    assert np.max(np.abs(report.u.values[:, 0] - oracle)) <= 2e-3


# --- REFUSAL ---

def test_solve_refused_without_invariance(laplacian):
    report = solve(laplacian, None, Rectangle([0.5], [1.0], 1), make_forcing("manufactured", 1, 1), SolverConfig())
    assert report.termination == Termination.INVARIANCE_REFUSED
    assert report.u is None
    assert "resolvent invariance FAIL" in report.message
    assert report.refusal == "resolvent_invariance"
    assert report.to_dict()["invariance"]["status"] == "FAIL"
    assert report.to_dict()["refusal"] == "resolvent_invariance"
    with pytest.raises(InvarianceRefused):
        report.raise_for_status()

def test_invariance_override_runs_the_solve(laplacian):
    cfg = SolverConfig(override_invariance=True, max_iters=20)
    report = solve(laplacian, None, Rectangle([0.5], [1.0], 1), make_forcing("manufactured", 1, 1), cfg)
    assert report.termination != Termination.INVARIANCE_REFUSED
    assert report.refusal is None
    assert report.stages

def test_solve_refused_when_forcing_points_outward(laplacian, unit_interval):
    push = ForcingTerm(lambda x, U, Xi: np.full_like(U, 10.0), 1, 1, beta=10.0, vectorized=True)
    report = solve(laplacian, None, unit_interval, push, SolverConfig())
    assert report.termination == Termination.INVARIANCE_REFUSED
    assert report.message.startswith("tangency audit FAIL")
    assert not report.tangency.passed
    assert report.refusal == "tangency"
    assert report.to_dict()["refusal"] == "tangency"
    assert report.invariance.passed

def test_step_violating_shift_rejected():
    op = assemble(OperatorCoefficients(1, 1, [[1.0]], C=-50.0), GridDomain(1, 1.0, 15))
    with pytest.raises(InadmissibleStep):
        solve(op, None, Rectangle([-1.0], [1.0], 1), make_forcing("zero", 1, 1), SolverConfig(h_schedule=[1.0]))

def test_initial_guess_is_projected(laplacian, unit_interval):
    u0 = VectorField(laplacian.grid, np.full(laplacian.grid.n_int, 3.0))
    cfg = SolverConfig(tol_res=1e-6, max_iters=2000)
    report = solve(laplacian, None, unit_interval, make_forcing("manufactured", 1, 1), cfg, u0=u0)
    assert report.converged
    assert report.u.sup_norm() <= 1.0
