"""
convexpde Truncation Driver

Problems on all of R^N approximated on expanding boxes [-R_n, R_n]^N with a fixed spacing:
each level is solved with the constrained solver, warm-started from the previous level
extended by zero, and the sequence is stopped once it is Cauchy in the discrete H¹ norm.

The tail table records, per level and probe radius, the L² and H¹ mass of the solution over
{|x|_inf >= R_probe}; a shell tail at R_n/2 that refuses to shrink over three consecutive
levels signals an envelope m(x) with insufficient decay.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from convexpde.constraints import BoundConstraint, ConstraintField
from convexpde.errors import LevelSolveFailed, TailStagnation, ValidationError
from convexpde.grid import (
    GridDomain,
    VectorField,
    extend_by_zero,
    face_differences,
    gradient,
    h1_norm,
    h1_seminorm,
    h2_seminorm,
    l2_norm,
    lp_norm,
)
from convexpde.nonlinearity import ForcingTerm
from convexpde.operator import OperatorCoefficients, assemble
from convexpde.solver import SolveReport, SolverConfig, solve

logger = logging.getLogger(__name__)

STAGNATION_LEVELS = 3


@dataclass
class TruncationSchedule:
    """Radii R_1 < R_2 < ... with a fixed spacing dx shared by every level."""

    radii: Sequence[float]
    dx: float
    N: int = 1
    tol_cauchy: float = 1e-4
    probe_fractions: Sequence[float] = (0.25, 0.5, 0.75)

    def __post_init__(self):
        self.radii = [float(r) for r in self.radii]
        if not self.radii:
            raise ValidationError("truncation schedule needs at least one radius")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValidationError(f"radii must be strictly increasing, got {self.radii}")
        if self.dx <= 0 or self.tol_cauchy <= 0:
            raise ValidationError("dx and tol_cauchy must be positive")
        for r in self.radii:
            cells = 2.0 * r / self.dx
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise ValidationError(f"radius {r} is not a multiple of dx/2 = {self.dx / 2}")
        self.probe_fractions = [float(p) for p in self.probe_fractions]
        if 0.5 not in self.probe_fractions:
            self.probe_fractions = sorted(self.probe_fractions + [0.5])

    def grid(self, level: int) -> GridDomain:
        return GridDomain.from_spacing(self.N, self.radii[level], self.dx)

    def probes(self, level: int) -> List[float]:
        return [f * self.radii[level] for f in self.probe_fractions]


def cutoff(points: np.ndarray, R: float) -> np.ndarray:
    """
    φ_R(x) = φ(|x|_inf² / R²) with φ smooth, φ = 1 on [0, 1] and φ = 0 on [4, ∞).
    """
    s = np.max(np.abs(points), axis=1) ** 2 / R ** 2
    t = np.clip((s - 1.0) / 3.0, 0.0, 1.0)

    def bump(y):
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(-1.0 / y[pos])
        return out

    return bump(1.0 - t) / (bump(1.0 - t) + bump(t))


def _tail_weights(grid: GridDomain, R: float) -> np.ndarray:
    """1 on nodes with |x|_inf > R, 1/2 on nodes exactly at R, 0 inside."""
    r = grid.sup_radius()
    eps = 1e-9 * grid.dx
    weights = np.where(r > R + eps, 1.0, 0.0)
    weights[np.abs(r - R) <= eps] = 0.5
    return weights


def tail_seminorm(u: VectorField, R: float) -> Tuple[float, float]:
    """(‖u‖_{L²}, |u|_{1,2}) over {|x|_inf >= R}; centred gradients, weight 1/2 on the shell |x|_inf = R."""
    if R >= u.grid.R:
        raise ValueError(f"probe radius {R} must be smaller than the domain half-width {u.grid.R}")
    w = _tail_weights(u.grid, R)
    l2 = l2_norm(u, weights=w)
    grad = gradient(u)
    h1 = float(np.sqrt(u.grid.cell_volume * np.sum(w * np.sum(grad ** 2, axis=(1, 2)))))
    return l2, h1


def envelope_tail(bound: BoundConstraint, R: float) -> float:
    """∫ m² over {|x|_inf >= R} on the bound grid, same shell weights as the tail seminorm."""
    w = _tail_weights(bound.grid, R)
    m2 = np.where(w > 0, bound.envelope, 0.0) ** 2
    return float(bound.grid.cell_volume * np.sum(w * m2))


def cutoff_tail(u: VectorField, R: float) -> float:
    """|u|_{1,2} weighted by 1 - φ_R, the smooth counterpart of the tail seminorm."""
    w = 1.0 - cutoff(u.grid.points, R)
    grad = gradient(u)
    return float(np.sqrt(u.grid.cell_volume * np.sum(w * np.sum(grad ** 2, axis=(1, 2)))))


@dataclass
class ProbeRow:
    R_probe: float
    l2_tail: float
    h1_tail: float


@dataclass
class TailLevel:
    level: int
    R: float
    l2: float
    h1: float
    h2_seminorm: float
    probes: List[ProbeRow]
    diff_h1: Optional[float]
    envelope_excess: float
    shell_tail: float
    envelope_tail: float


@dataclass
class TailReport:
    levels: List[TailLevel] = field(default_factory=list)
    terminated_by: str = ""
    note: str = "tol_cauchy is a pragmatic stopping rule on successive H¹ differences"

    def table(self) -> List[tuple]:
        """Rows (n, R_probe, l2_tail, h1_tail, diff_h1)."""
        return [(lv.level, p.R_probe, p.l2_tail, p.h1_tail, lv.diff_h1)
                for lv in self.levels for p in lv.probes]

    def diffs(self) -> List[float]:
        return [lv.diff_h1 for lv in self.levels if lv.diff_h1 is not None]

    def to_dict(self) -> dict:
        return {
            "terminated_by": self.terminated_by,
            "note": self.note,
            "levels": [asdict(lv) for lv in self.levels],
        }


def _level_record(level: int, u: VectorField, bound: BoundConstraint, probes: Sequence[float],
                  previous: Optional[VectorField]) -> TailLevel:
    rows = [ProbeRow(R, *tail_seminorm(u, R)) for R in probes]
    diff = None
    if previous is not None:
        ext = extend_by_zero(previous, u.grid)
        diff = h1_norm(u.with_values(u.values - ext.values))
    mags = np.linalg.norm(u.values, axis=1)
    excess = float(np.max(mags - bound.envelope)) if mags.size else 0.0
    shell = tail_seminorm(u, 0.5 * u.grid.R)[1]
    return TailLevel(level, u.grid.R, l2_norm(u), h1_seminorm(u), h2_seminorm(u), rows, diff, excess, shell,
                     envelope_tail(bound, 0.5 * u.grid.R))


def run_truncation(coeffs: OperatorCoefficients, field: ConstraintField, f: ForcingTerm,
                   schedule: TruncationSchedule, solver_cfg: SolverConfig,
                   callback: Optional[Callable[[int, VectorField], None]] = None
                   ) -> Tuple[VectorField, TailReport, List[SolveReport]]:
    """
    Solves on the boxes of the schedule until ‖u_{n+1} - u_n‖_{H¹} <= tol_cauchy.

    Raises LevelSolveFailed when a level does not converge and TailStagnation when the
    shell tail at R_n/2 does not decrease over three consecutive levels.
    """
    if not coeffs.constant_A:
        raise ValidationError("the truncation driver needs constant second-order coefficients")
    report = TailReport()
    solves: List[SolveReport] = []
    previous: Optional[VectorField] = None
    u = None
    for level in range(len(schedule.radii)):
        grid = schedule.grid(level)
        bound = field.bind(grid)
        op = assemble(coeffs, grid, seed=solver_cfg.seed)
        if previous is None:
            u0 = VectorField.zeros(grid, field.M)
        else:
            u0 = extend_by_zero(previous, grid)
        u0 = bound.project_field(u0)
        rep = solve(op, None, bound, f, solver_cfg, u0)
        solves.append(rep)
        if not rep.converged:
            raise LevelSolveFailed(level + 1, f"{rep.termination.value}: {rep.message}")
        u = rep.u
        record = _level_record(level + 1, u, bound, schedule.probes(level), previous)
        report.levels.append(record)
        logger.info("level %d (R=%g): diff_h1=%s, shell tail %.3e",
                    level + 1, grid.R, record.diff_h1, record.shell_tail)
        if callback is not None:
            callback(level + 1, u)

        if record.diff_h1 is not None and record.diff_h1 <= schedule.tol_cauchy:
            report.terminated_by = "cauchy"
            return u, report, solves

        shells = [lv.shell_tail for lv in report.levels[-STAGNATION_LEVELS:]]
        if (len(shells) == STAGNATION_LEVELS and shells[-1] > schedule.tol_cauchy
                and all(b >= a for a, b in zip(shells, shells[1:]))):
            envelopes = [lv.envelope_tail for lv in report.levels[-STAGNATION_LEVELS:]]
            raise TailStagnation(
                f"shell tail at R_n/2 did not decrease over levels "
                f"{level + 2 - STAGNATION_LEVELS}..{level + 1}: {shells}; "
                f"envelope tail ∫m² over the same shells: {envelopes}"
            )
        previous = u

    report.terminated_by = "max_level"
    return u, report, solves


@dataclass
class AuditRecord:
    R: float
    sobolev_lhs: Optional[float]
    sobolev_rhs: Optional[float]
    sobolev_ratio: Optional[float]
    eb_lhs: float
    eb_rhs: float
    eb_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def scaled_inequality_audit(u: VectorField, R: Optional[float] = None) -> AuditRecord:
    """
    Both sides of the R-scaled Sobolev inequality (p = 2, N >= 3)

        ‖v‖_{p*} <= c (R^{-p} ‖v‖_p^p + Σ_i ‖∂_i v‖_p^p)^{1/p}

    and of the scaled Ehrling–Browder inequality |v|²_{1,2} <= c (|v|_{2,2} ‖v‖ + R^{-2} ‖v‖²).
    Ratios are lhs / rhs; the zero field has ratio 0.
    """
    R = u.grid.R if R is None else float(R)
    N = u.grid.N
    l2 = l2_norm(u)
    s_lhs = s_rhs = s_ratio = None
    if N >= 3:
        p_star = 2.0 * N / (N - 2.0)
        s_lhs = lp_norm(u, p_star)
        faces = face_differences(u)
        grad_sq = sum(float(np.sum(fd ** 2)) for fd in faces) * u.grid.cell_volume
        s_rhs = float(np.sqrt(R ** -2 * l2 ** 2 + grad_sq))
        s_ratio = s_lhs / s_rhs if s_rhs > 0 else 0.0
    h1 = h1_seminorm(u)
    h2 = h2_seminorm(u)
    eb_lhs = h1 ** 2
    eb_rhs = h2 * l2 + R ** -2 * l2 ** 2
    eb_ratio = eb_lhs / eb_rhs if eb_rhs > 0 else 0.0
    return AuditRecord(R, s_lhs, s_rhs, s_ratio, eb_lhs, eb_rhs, eb_ratio)


def scaled_audit_sweep(profile: Callable[[np.ndarray], np.ndarray], N: int, radii: Sequence[float],
                       n_per_axis: int, width: float = 2.0) -> List[AuditRecord]:
    """Audits v_R(x) = profile(x / R) on [-width·R, width·R]^N for every R (same node count)."""
    records = []
    for R in radii:
        grid = GridDomain(N, width * R, n_per_axis)
        values = np.asarray(profile(grid.points / R), dtype=float).reshape(grid.n_int, -1)
        records.append(scaled_inequality_audit(VectorField(grid, values), R))
    return records
