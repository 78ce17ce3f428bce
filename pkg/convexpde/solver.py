"""
convexpde Constrained Solver

Constrained coincidences S u = F(u), u(x) ∈ K(x), found through the projected-resolvent map

    φ_h(u) = J_h( r(u + h t F(u)) )

by damped fixed-point iteration u <- (1 - λ) u + λ φ_h(u), continued in the homotopy
parameter t (H(u, t) = t F(u)) and in h along a decreasing schedule, warm-starting every
stage from the previous one.

Every stage reports the fixed-point gap, the residual ‖S u - t F(u)‖ and the certificate

    ‖S u - t F(u)‖ <= (L/h) (d(u + h t F(u), K) + (1 + h‖S‖) ‖φ_h(u) - u‖).

The solver refuses to run unless the sampled resolvent invariance check passes (or is
overridden); refusal, divergence and iteration limits are reported, and
`SolveReport.raise_for_status()` turns them into exceptions.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from convexpde.constraints import BoundConstraint, ConstraintField
from convexpde.errors import Diverged, InadmissibleStep, InvarianceRefused, MaxItersExceeded, ValidationError
from convexpde.grid import VectorField, l2_norm
from convexpde.nonlinearity import ForcingTerm, TangencyReport, audit_tangency, superpose
from convexpde.operator import AssembledOperator, estimate_garding
from convexpde.resolvent import InvarianceReport, ResolventHandle, verify_resolvent_invariance

logger = logging.getLogger(__name__)

DEFAULT_H_FACTORS = (0.2, 0.1, 0.05, 0.02)
MIN_DAMPING = 1.0 / 64.0
DIVERGENCE_FACTOR = 1e3


class Termination(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    INVARIANCE_REFUSED = "InvarianceRefused"
    DIVERGED = "Diverged"


@dataclass
class SolverConfig:
    h_schedule: Optional[List[float]] = None
    max_iters: int = 500
    tol_fp: float = 1e-13
    tol_res: float = 1e-8
    damping: float = 0.5
    homotopy: Sequence[float] = (0.5, 1.0)
    L_retract: float = 1.0
    tol_inv: Optional[float] = None
    override_invariance: bool = False
    override_tangency: bool = False
    dump_every: int = 0
    n_invariance_samples: int = 16
    n_tangency_samples: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.h_schedule is not None:
            hs = [float(h) for h in self.h_schedule]
            if not hs or any(h <= 0 for h in hs):
                raise ValidationError("h_schedule entries must be positive")
            if any(b >= a for a, b in zip(hs, hs[1:])):
                raise ValidationError(f"h_schedule must be strictly decreasing, got {hs}")
            self.h_schedule = hs
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.tol_fp <= 0 or self.tol_res <= 0 or (self.tol_inv is not None and self.tol_inv <= 0):
            raise ValidationError("tolerances must be positive")
        if not 0 < self.damping <= 1:
            raise ValidationError(f"damping must lie in (0, 1], got {self.damping}")
        ts = [float(t) for t in self.homotopy]
        if not ts or any(not 0 <= t <= 1 for t in ts) or any(b < a for a, b in zip(ts, ts[1:])) or ts[-1] != 1.0:
            raise ValidationError(f"homotopy steps must increase within [0, 1] and end at 1, got {ts}")
        self.homotopy = ts
        if self.L_retract < 1:
            raise ValidationError("L_retract must be >= 1")

    def tolerance_inv(self, u: np.ndarray) -> float:
        if self.tol_inv is not None:
            return self.tol_inv
        return 1e-8 * (1.0 + (float(np.max(np.abs(u))) if u.size else 0.0))


@dataclass
class StageBlock:
    t: float
    h: float
    iterations: int
    fixed_point_gap: float
    residual: float
    certificate: float
    certificate_holds: bool
    violation: float
    damping: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SolveReport:
    termination: Termination
    stages: List[StageBlock] = field(default_factory=list)
    u: Optional[VectorField] = None
    residual: float = float("nan")
    violation: float = float("nan")
    residual_history: List[float] = field(default_factory=list)
    violation_log: List[dict] = field(default_factory=list)
    invariance: Optional[InvarianceReport] = None
    tangency: Optional[TangencyReport] = None
    message: str = ""
    refusal: Optional[str] = None

    @property
    def converged(self) -> bool:
        return self.termination == Termination.CONVERGED

    def residual_vs_h(self) -> List[tuple]:
        """(h, residual) at the end of every stage with t = 1."""
        return [(s.h, s.residual) for s in self.stages if s.t == 1.0]

    def raise_for_status(self):
        if self.termination == Termination.DIVERGED:
            raise Diverged(self.message)
        if self.termination == Termination.INVARIANCE_REFUSED:
            raise InvarianceRefused(self.message)
        if self.termination == Termination.MAX_ITERS:
            raise MaxItersExceeded(self.message)

    def to_dict(self) -> dict:
        return {
            "termination": self.termination.value,
            "refusal": self.refusal,
            "residual": self.residual,
            "violation": self.violation,
            "message": self.message,
            "stages": [s.to_dict() for s in self.stages],
            "residual_vs_h": [list(row) for row in self.residual_vs_h()],
            "violation_log": self.violation_log,
            "invariance": self.invariance.to_dict() if self.invariance else None,
            "tangency": self.tangency.to_dict() if self.tangency else None,
        }


def _bind(field_or_bound: Union[ConstraintField, BoundConstraint], grid) -> BoundConstraint:
    return field_or_bound if isinstance(field_or_bound, BoundConstraint) else field_or_bound.bind(grid)


def phi_step(rh: ResolventHandle, field: Union[ConstraintField, BoundConstraint], f: ForcingTerm,
             u: VectorField, t: float) -> VectorField:
    """φ_h(u) = J_h(r(u + h t F(u))), projection applied node by node."""
    bound = _bind(field, u.grid)
    F = superpose(f, u)
    moved = bound.project(u.values + rh.h * t * F.values)
    return VectorField.from_flat(u.grid, rh.solve(moved.reshape(-1)), u.M)


def residual_norm(op: AssembledOperator, f: ForcingTerm, u: VectorField, t: float = 1.0) -> float:
    """‖S u - t F(u)‖ in the grid L² norm."""
    Su = (op.S @ u.flat()).reshape(u.values.shape)
    return l2_norm(u.with_values(Su - t * superpose(f, u).values))


def default_h_schedule(op: AssembledOperator, omega: float = 0.0,
                       factors: Sequence[float] = DEFAULT_H_FACTORS) -> List[float]:
    """factors × 1/λ_min(S_sym), capped at h <= 0.5/ω when ω > 0."""
    lo, _ = op.spectral_bounds()
    scale = 1.0 / abs(lo) if abs(lo) > 1e-12 else 1.0
    hs = [c * scale for c in factors]
    if omega > 0:
        hs = [min(h, 0.5 / omega * c / factors[0]) for h, c in zip(hs, factors)]
    return hs


def solve(op: AssembledOperator, rh_factory: Optional[Callable[[float], ResolventHandle]],
          field: Union[ConstraintField, BoundConstraint], f: ForcingTerm, cfg: SolverConfig,
          u0: Optional[VectorField] = None, invariance: Optional[InvarianceReport] = None,
          tangency: Optional[TangencyReport] = None,
          callback: Optional[Callable[[int, int, VectorField], None]] = None) -> SolveReport:
    """
    Damped fixed-point iteration of φ_h over the homotopy and h schedules.

    `callback(stage, iteration, u)` is called every cfg.dump_every iterations (and at the
    end of every stage) when dump_every > 0.
    """
    grid = op.grid
    bound = _bind(field, grid)
    omega = 0.0
    if rh_factory is None:
        omega = estimate_garding(op, seed=cfg.seed).omega

        def rh_factory(h):
            return ResolventHandle(op, h, omega, seed=cfg.seed)

    schedule = cfg.h_schedule or default_h_schedule(op, omega)
    handles = []
    for h in schedule:
        if h * omega >= 1:
            raise InadmissibleStep(f"h = {h} violates h·ω < 1 (ω = {omega})")
        handles.append(rh_factory(h))

    report = SolveReport(Termination.CONVERGED)
    if invariance is None:
        invariance = verify_resolvent_invariance(handles[0], bound, n_samples=cfg.n_invariance_samples,
                                                 h_list=schedule, seed=cfg.seed, workers=cfg.workers)
    report.invariance = invariance
    if not invariance.passed:
        witness = invariance.witness()
        message = (f"resolvent invariance FAIL at h={witness.h:g}: distance {witness.worst_distance:.3e} "
                   f"at node {witness.witness_node} (sample {witness.witness_sample})")
        if not cfg.override_invariance:
            report.termination = Termination.INVARIANCE_REFUSED
            report.refusal = "resolvent_invariance"
            report.message = message
            logger.warning("refusing constrained solve: %s", message)
            return report
        logger.warning("invariance override in effect: %s", message)

    if tangency is None:
        tangency = audit_tangency(f, bound, grid, n_boundary_samples=cfg.n_tangency_samples, seed=cfg.seed)
    report.tangency = tangency
    if not tangency.passed:
        message = f"tangency audit FAIL at x={tangency.witness['x']}, u={tangency.witness['u']}"
        if not cfg.override_tangency:
            report.termination = Termination.INVARIANCE_REFUSED
            report.refusal = "tangency"
            report.message = message
            logger.warning("refusing constrained solve: %s", message)
            return report
        logger.warning("tangency override in effect: %s", message)

    u = VectorField.zeros(grid, op.M) if u0 is None else u0.copy()
    u = bound.project_field(u)
    finite_env = bound.envelope[np.isfinite(bound.envelope)]
    blowup = DIVERGENCE_FACTOR * (1.0 + (float(finite_env.max()) if finite_env.size else 1.0))
    norm_S = op.norm_bound()

    initial = residual_norm(op, f, u, cfg.homotopy[-1])
    report.residual_history.append(initial)
    if initial == 0.0:
        report.u, report.residual, report.violation = u, 0.0, bound.violation(u.values)
        report.message = "initial guess is an exact coincidence"
        logger.info("solve: zero residual at the initial guess")
        return report

    stage_index = 0
    hit_limit = False
    for t in cfg.homotopy:
        for h, rh in zip(schedule, handles):
            damping = cfg.damping
            residual = residual_norm(op, f, u, t)
            gap = np.inf
            iterations = 0
            for iterations in range(1, cfg.max_iters + 1):
                phi = phi_step(rh, bound, f, u, t)
                gap = l2_norm(phi.with_values(phi.values - u.values))
                u = u.with_values((1.0 - damping) * u.values + damping * phi.values)

                violation = bound.violation(u.values)
                if violation > cfg.tolerance_inv(u.values):
                    report.violation_log.append({"t": t, "h": h, "iteration": iterations, "violation": violation})
                size = float(np.max(np.abs(u.values))) if u.values.size else 0.0
                if not np.isfinite(size) or size > blowup:
                    report.termination = Termination.DIVERGED
                    report.u = u
                    report.message = f"field norm {size:.3e} exceeds {blowup:.3e} at t={t}, h={h}"
                    logger.warning("solve diverged: %s", report.message)
                    return report

                new_residual = residual_norm(op, f, u, t)
                report.residual_history.append(new_residual)
                if new_residual < residual:
                    damping = min(1.0, 2.0 * damping)
                else:
                    damping = max(MIN_DAMPING, 0.5 * damping)
                residual = new_residual

                if callback is not None and cfg.dump_every > 0 and iterations % cfg.dump_every == 0:
                    callback(stage_index, iterations, u)
                if residual <= cfg.tol_res or gap <= cfg.tol_fp * (1.0 + size):
                    break
            else:
                hit_limit = True

            F = superpose(f, u)
            distance = bound.field_distance_l2(u.with_values(u.values + h * t * F.values))
            phi = phi_step(rh, bound, f, u, t)
            gap_now = l2_norm(phi.with_values(phi.values - u.values))
            certificate = cfg.L_retract / h * (distance + (1.0 + h * norm_S) * gap_now)
            block = StageBlock(
                t=t, h=h, iterations=iterations, fixed_point_gap=gap_now, residual=residual,
                certificate=certificate,
                certificate_holds=residual <= certificate * (1.0 + 1e-8) + 1e-14,
                violation=bound.violation(u.values), damping=damping,
            )
            report.stages.append(block)
            logger.info("stage t=%g h=%g: %d iterations, residual %.3e, gap %.3e",
                        t, h, iterations, residual, gap_now)
            if callback is not None and cfg.dump_every > 0:
                callback(stage_index, iterations, u)
            stage_index += 1

    report.u = u
    report.residual = report.stages[-1].residual
    report.violation = report.stages[-1].violation
    if report.residual <= cfg.tol_res and report.violation <= cfg.tolerance_inv(u.values):
        report.termination = Termination.CONVERGED
    else:
        report.termination = Termination.MAX_ITERS
        report.message = (f"residual {report.residual:.3e} (tol {cfg.tol_res:g}), "
                          f"violation {report.violation:.3e}" + (" after hitting max_iters" if hit_limit else ""))
    return report
