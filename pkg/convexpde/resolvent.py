"""
convexpde Resolvent Module

J_h = (I + hS)^{-1} on grid functions, semigroup stepping by repeated resolvent
application and sampled verification that J_h maps the constraint set into itself.

Invariance is never assumed: `verify_resolvent_invariance` checks it on random grid
functions with values in K(x) and the constrained solver refuses to run without a PASS.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from convexpde.constraints import BoundConstraint, ConstraintField
from convexpde.errors import InadmissibleStep, SingularSystem
from convexpde.grid import GridDomain, VectorField
from convexpde.operator import AssembledOperator, bilinear_form

logger = logging.getLogger(__name__)

FACTOR_RESIDUAL_TOL = 1e-10


class ResolventHandle:
    """
    J_h for one step size h on an assembled operator.

    The factorization of I + hS is shared through the operator's cache, so handles are
    cheap to create and safe to apply concurrently.
    """

    def __init__(self, operator: AssembledOperator, h: float, omega: float = 0.0, seed: int = 0):
        if h <= 0:
            raise InadmissibleStep(f"step h must be positive, got {h}")
        if h * omega >= 1.0:
            raise InadmissibleStep(f"h·ω = {h * omega:.3g} >= 1 (h={h}, ω={omega})")
        self.operator = operator
        self.h = float(h)
        self.omega = float(omega)
        self._factor = operator.factorization(self.h)
        self._system = (sp.identity(operator.size, format="csr") + self.h * operator.S).tocsr()
        self._check_factorization(seed)

    def _check_factorization(self, seed: int):
        rng = np.random.default_rng(seed)
        rhs = rng.standard_normal(self.operator.size)
        v = self.solve(rhs)
        residual = np.linalg.norm(self._system @ v - rhs)
        if not residual <= FACTOR_RESIDUAL_TOL * np.linalg.norm(rhs):
            raise SingularSystem(
                f"(I + hS) solve residual {residual:.3e} too large for h={self.h}; "
                "h·ω may be >= 1 or the assembly is broken"
            )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._factor is not None:
            out = self._factor.solve(np.asarray(rhs, dtype=float))
        else:
            solver = spla.cg if self.operator.is_symmetric() else spla.bicgstab
            out, info = solver(self._system, rhs, rtol=1e-12, atol=0.0, maxiter=10 * self.operator.size)
            if info != 0:
                raise SingularSystem(f"iterative resolvent solve did not converge (info={info})")
        if not np.all(np.isfinite(out)):
            raise SingularSystem(f"non-finite resolvent output for h={self.h}")
        return out

    def apply(self, u: VectorField) -> VectorField:
        self.operator.grid.check_same(u.grid)
        return VectorField.from_flat(u.grid, self.solve(u.flat()), u.M)

    def bound_factor(self) -> float:
        """Bound ‖J_h‖ <= (1 - hω)^{-1}, valid in the self-adjoint case."""
        return 1.0 / (1.0 - self.h * self.omega)


def apply_resolvent(rh: ResolventHandle, u: VectorField) -> VectorField:
    return rh.apply(u)


def semigroup_step(rh: ResolventHandle, u: VectorField, t_final: float, n_steps: int) -> VectorField:
    """(J_{t/n})^n u, the implicit-Euler approximation of e^{-tA} u."""
    if t_final < 0 or n_steps < 0:
        raise ValueError("t_final and n_steps must be non-negative")
    if t_final == 0 or n_steps == 0:
        return u.copy()
    step = t_final / n_steps
    handle = rh if abs(step - rh.h) <= 1e-15 * rh.h else ResolventHandle(rh.operator, step, rh.omega)
    out = u
    for _ in range(n_steps):
        out = handle.apply(out)
    return out


# --------------------------------------------------------------------------- sampling


def smooth_field(grid: GridDomain, M: int, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    """Random low-frequency sine combination with unit-order amplitude, shape (n_int, M)."""
    s = (grid.points + grid.R) / (2.0 * grid.R)
    out = np.zeros((grid.n_int, M))
    for k in range(M):
        for _ in range(modes):
            freq = rng.integers(1, modes + 1, size=grid.N)
            phase = rng.uniform(0.0, np.pi, size=grid.N)
            out[:, k] += rng.standard_normal() * np.prod(np.sin(np.pi * freq * s + phase), axis=1)
    return out


def constrained_sample(bound: BoundConstraint, grid: GridDomain, rng: np.random.Generator,
                       kind: str, spread: float = 2.0) -> np.ndarray:
    """A grid function with values in K(x): smooth data projected in, or corner-like data."""
    finite = np.where(np.isfinite(bound.envelope), bound.envelope, 1.0)
    anchor = bound.project(np.zeros((grid.n_int, bound.M)))
    if kind == "smooth":
        raw = smooth_field(grid, bound.M, rng) * (spread * (1.0 + finite))[:, None]
        return bound.project(anchor + raw)
    corners = bound.boundary_points(rng, spread=10.0 * spread)
    keep = rng.random(grid.n_int) < 0.8
    return np.where(keep[:, None], corners, anchor)


@dataclass
class InvarianceRow:
    h: float
    worst_distance: float
    tolerance: float
    witness_node: Optional[int]
    witness_sample: Optional[int]
    passed: bool

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"


@dataclass
class InvarianceReport:
    n_samples: int
    rows: List[InvarianceRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def witness(self) -> Optional[InvarianceRow]:
        failing = [r for r in self.rows if not r.passed]
        return max(failing, key=lambda r: r.worst_distance) if failing else None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "n_samples": self.n_samples,
            "rows": [dict(asdict(r), status=r.status) for r in self.rows],
        }


def _bind(field_or_bound: Union[ConstraintField, BoundConstraint], grid: GridDomain) -> BoundConstraint:
    if isinstance(field_or_bound, BoundConstraint):
        return field_or_bound
    return field_or_bound.bind(grid)


def verify_resolvent_invariance(rh: ResolventHandle, constraint: Union[ConstraintField, BoundConstraint],
                                n_samples: int = 32, h_list: Optional[Sequence[float]] = None,
                                seed: int = 0, workers: int = 1) -> InvarianceReport:
    """
    Worst nodewise distance of J_h u to K over random K-valued fields u, for each h.

    A sample passes when max_x d((J_h u)(x), K(x)) <= 1e-8 (1 + ‖u‖_inf).
    FAIL is data: the row carries the witness sample and node.
    """
    op = rh.operator
    grid = op.grid
    bound = _bind(constraint, grid)
    h_list = list(h_list) if h_list is not None else [rh.h]
    handles: Dict[float, Optional[ResolventHandle]] = {}
    for h in h_list:
        handles[h] = None if h == 0 else (rh if h == rh.h else ResolventHandle(op, h, rh.omega))
    children = np.random.SeedSequence(seed).spawn(n_samples)

    def run(index: int):
        rng = np.random.default_rng(children[index])
        kind = "smooth" if index % 2 == 0 else "corner"
        u = constrained_sample(bound, grid, rng, kind)
        tol = 1e-8 * (1.0 + float(np.max(np.abs(u))) if u.size else 1.0)
        out = []
        for h in h_list:
            handle = handles[h]
            if handle is None:
                out.append((0.0, tol, 0))
                continue
            v = handle.solve(u.reshape(-1)).reshape(u.shape)
            dist = bound.distance(v)
            node = int(np.argmax(dist))
            out.append((float(dist[node]), tol, node))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n_samples)))
    else:
        results = [run(i) for i in range(n_samples)]

    report = InvarianceReport(n_samples=n_samples)
    for col, h in enumerate(h_list):
        worst, worst_tol, witness, passed, excess = 0.0, 1e-8, (None, None), True, -np.inf
        for index, sample_rows in enumerate(results):
            dist, tol, node = sample_rows[col]
            if dist > worst:
                worst, worst_tol = dist, tol
            if dist - tol > excess:
                excess = dist - tol
                witness = (node, index)
            if dist > tol:
                passed = False
        node, sample = witness if not passed else (None, None)
        report.rows.append(InvarianceRow(h, worst, worst_tol, node, sample, passed))
        logger.info("resolvent invariance h=%g: worst %.3e (%s)", h, worst, "PASS" if passed else "FAIL")
    return report


@dataclass
class SampledCheckReport:
    name: str
    status: str
    worst: float
    witness_sample: Optional[int] = None
    witness_node: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


def sample_projection_inequality(op: AssembledOperator, constraint: Union[ConstraintField, BoundConstraint],
                                 n_samples: int = 32, seed: int = 0) -> SampledCheckReport:
    """Samples B[π(u), u - π(u)] >= 0 over random (unconstrained) fields u."""
    grid = op.grid
    bound = _bind(constraint, grid)
    rng = np.random.default_rng(seed)
    finite = np.where(np.isfinite(bound.envelope), bound.envelope, 1.0)
    worst, witness = np.inf, None
    for index in range(n_samples):
        raw = smooth_field(grid, bound.M, rng) * (3.0 * (1.0 + finite))[:, None]
        u = VectorField(grid, raw)
        pu = bound.project_field(u)
        value = bilinear_form(op, pu, u.with_values(u.values - pu.values))
        scale = op.mass * op.norm_bound() * max(1.0, float(np.sum(raw ** 2)))
        relative = value / scale
        if relative < worst:
            worst, witness = relative, index
    status = "PASS" if worst >= -1e-12 else "FAIL"
    return SampledCheckReport("projection_form", status, float(worst), witness if status == "FAIL" else None)


def sample_generator_tangency(op: AssembledOperator, constraint: Union[ConstraintField, BoundConstraint],
                              n_samples: int = 32, seed: int = 0) -> SampledCheckReport:
    """Samples the nodewise tangency -(S u)(x) ∈ T_{K(x)}(u(x)) over K-valued fields u."""
    grid = op.grid
    bound = _bind(constraint, grid)
    rng = np.random.default_rng(seed)
    worst_count = 0
    witness = (None, None)
    for index in range(n_samples):
        kind = "smooth" if index % 2 == 0 else "corner"
        u = constrained_sample(bound, grid, rng, kind)
        w = -(op.S @ u.reshape(-1)).reshape(u.shape)
        failures = [i for i in range(grid.n_int) if not bound.tangent(i, u[i], w[i])]
        if failures and worst_count == 0:
            witness = (index, failures[0])
        worst_count += len(failures)
    status = "PASS" if worst_count == 0 else "FAIL"
    return SampledCheckReport("generator_tangency", status, float(worst_count), witness[0], witness[1])
