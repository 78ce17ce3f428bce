"""
convexpde Invariance Criteria

Sufficient conditions for resolvent invariance of a constraint set, checked on the grid:

- eigenvector: every coefficient matrix, transposed, has the half-space normal p as an eigenvector
- form_sign:   B[ξ_p p, η p] >= 0 for every nonnegative nodal hat η
- mueller:     diagonal operators, B_k[σ_k, η] <= 0 <= B_k[τ_k, η] for every hat η

Nonnegative grid functions are exactly the nonnegative combinations of hats, so the
"for every η >= 0" quantifier is checked on the finite family of hats. The hat values are
computed with the Dirichlet-eliminated stiffness matrix, which is the operator J_h inverts.
Sign conditions alone say nothing about the discrete resolvent unless the scalar operator
is a Z-matrix, so that is checked and reported too.

Results are data: every check returns a CriterionReport and never raises.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from convexpde.constraints import Param, evaluate_param
from convexpde.grid import GridDomain
from convexpde.operator import AssembledOperator, OperatorCoefficients, _eval_matrix, assemble, face_points

logger = logging.getLogger(__name__)

EIGEN_TOL = 1e-10
SIGN_TOL = 1e-10


class CriterionStatus(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    NOT_APPLICABLE = "NOT_APPLICABLE"


@dataclass
class CriterionReport:
    criterion: str
    status: CriterionStatus
    witnesses: List[dict] = field(default_factory=list)
    margin: Optional[float] = None
    scalars: List[Dict[str, np.ndarray]] = field(default_factory=list)
    trace_checks: List[dict] = field(default_factory=list)
    assertions: List[str] = field(default_factory=list)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == CriterionStatus.PASS

    def scalar(self, normal_index: int, name: str) -> Union[float, np.ndarray]:
        """Extracted scalar coefficient; a float when it is constant over the grid."""
        values = self.scalars[normal_index][name]
        if np.allclose(values, values.flat[0], rtol=0.0, atol=1e-14):
            return float(values.flat[0])
        return values

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "status": self.status.value,
            "margin": self.margin,
            "witnesses": self.witnesses,
            "trace_checks": self.trace_checks,
            "assertions": list(self.assertions),
            "note": self.note,
        }


def _coefficient_tables(coeffs: OperatorCoefficients, grid: GridDomain):
    """(name, points, values) for every coefficient matrix, evaluated where assembly evaluates it."""
    M = coeffs.M
    out = []
    for i in range(coeffs.N):
        fpts = face_points(grid, i)
        out.append((f"A{i + 1}{i + 1}", fpts, _eval_matrix(coeffs.A[i][i], fpts, M)))
    for i in range(coeffs.N):
        for j in range(coeffs.N):
            if i != j:
                out.append((f"A{i + 1}{j + 1}", grid.points, _eval_matrix(coeffs.A[i][j], grid.points, M)))
    for i in range(coeffs.N):
        out.append((f"B{i + 1}", grid.points, _eval_matrix(coeffs.B[i], grid.points, M)))
    out.append(("C", grid.points, _eval_matrix(coeffs.C, grid.points, M)))
    return out


def check_eigenvector_conditions(coeffs: OperatorCoefficients, normals: Sequence[Sequence[float]],
                                 grid: GridDomain, tol: float = EIGEN_TOL) -> CriterionReport:
    """
    Checks ᵀA^{ij}(x) p = a^{ij}(x) p (and the same for B^i, C) for every normal p.

    On PASS the scalar fields a^{ij}, b^i, c are returned per normal, keyed "A11", "B1", "C".
    """
    if len(normals) == 0:
        return CriterionReport("eigenvector", CriterionStatus.NOT_APPLICABLE, note="no normals given")
    tables = _coefficient_tables(coeffs, grid)
    report = CriterionReport("eigenvector", CriterionStatus.PASS)
    worst = 0.0
    for index, p in enumerate(normals):
        p = np.asarray(p, dtype=float)
        if abs(np.linalg.norm(p) - 1.0) > 1e-12:
            report.status = CriterionStatus.FAIL
            report.witnesses.append({"p": p.tolist(), "matrix": None, "defect": "normal is not a unit vector"})
            report.scalars.append({})
            continue
        scalars = {}
        for name, pts, values in tables:
            w = np.einsum("pkl,k->pl", values, p)
            a = w @ p
            defect = w - a[:, None] * p
            size = np.linalg.norm(defect, axis=1)
            relative = size / np.maximum(1.0, np.linalg.norm(w, axis=1))
            k = int(np.argmax(relative))
            worst = max(worst, float(relative[k]))
            if relative[k] > tol:
                report.status = CriterionStatus.FAIL
                report.witnesses.append({
                    "x": pts[k].tolist(),
                    "p": p.tolist(),
                    "matrix": name,
                    "defect": (defect[k] / size[k]).tolist(),
                    "magnitude": float(size[k]),
                })
            scalars[name] = a
        report.scalars.append(scalars)
    if report.passed:
        report.margin = float(tol - worst)
    logger.info("eigenvector criterion: %s", report.status.value)
    return report


def _scalar_operator(op: AssembledOperator, p: np.ndarray) -> sp.csr_matrix:
    """(I_n ⊗ pᵀ) S (I_n ⊗ p): the action of S along p, valid when p is a left eigenvector."""
    embed = sp.kron(sp.identity(op.grid.n_int, format="csr"), sp.csr_matrix(p.reshape(-1, 1)), format="csr")
    return (embed.T @ op.S @ embed).tocsr()


def _z_matrix_defect(S_p: sp.csr_matrix) -> tuple:
    off = (S_p - sp.diags(S_p.diagonal())).tocoo()
    if off.nnz == 0 or off.data.max() <= 0:
        return 0.0, None
    k = int(np.argmax(off.data))
    return float(off.data[k]), (int(off.row[k]), int(off.col[k]))


def _hat_values(op: AssembledOperator, S_p: sp.csr_matrix, values: np.ndarray) -> np.ndarray:
    """B[ξ p, η_i p] for every hat η_i, computed as Δx^N (S_p ξ)_i."""
    return (S_p @ values) * op.mass


def _sign_check(op, S_p, values, sign: int, label: str, report: CriterionReport, extra: dict):
    """Adds witnesses for hats where sign * value < -tol * scale; returns the smallest slack."""
    hats = sign * _hat_values(op, S_p, values)
    scale = op.mass * op.norm_bound() * max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    k = int(np.argmin(hats))
    if hats[k] < -SIGN_TOL * scale:
        report.status = CriterionStatus.FAIL
        report.witnesses.append({
            "x": op.grid.points[k].tolist(),
            "node": k,
            "matrix": label,
            "defect": float(sign * hats[k]),
            **extra,
        })
    return float(hats[k])


def _trace_check(grid: GridDomain, values: np.ndarray, sign: int, name: str) -> dict:
    """sign * value >= 0 at boundary-adjacent nodes (0 must lie in K on the boundary)."""
    mask = grid.boundary_mask
    worst = float(np.min(sign * values[mask])) if np.any(mask) else 0.0
    return {"name": name, "status": "PASS" if worst >= 0 else "FAIL", "worst": worst}


def _operator_for(coeffs_or_op: Union[OperatorCoefficients, AssembledOperator], grid: GridDomain) -> AssembledOperator:
    if isinstance(coeffs_or_op, AssembledOperator):
        coeffs_or_op.grid.check_same(grid)
        return coeffs_or_op
    return assemble(coeffs_or_op, grid)


def check_form_sign(coeffs: Union[OperatorCoefficients, AssembledOperator], grid: GridDomain,
                    p: Sequence[float], xi: Param, assertions: Sequence[str] = ()) -> CriterionReport:
    """
    Checks B[ξ_p p, η p] >= 0 on every nonnegative hat η for the half-space ⟨p, u⟩ <= ξ_p(x).

    Requires the eigenvector condition for p (NOT_APPLICABLE otherwise).
    """
    op = _operator_for(coeffs, grid)
    p = np.asarray(p, dtype=float)
    eigen = check_eigenvector_conditions(op.coeffs, [p], grid)
    if not eigen.passed:
        return CriterionReport("form_sign", CriterionStatus.NOT_APPLICABLE, witnesses=eigen.witnesses,
                               assertions=list(assertions), note="eigenvector condition fails for p")
    values = evaluate_param(xi, grid.points, ())
    S_p = _scalar_operator(op, p)
    report = CriterionReport("form_sign", CriterionStatus.PASS, assertions=list(assertions))
    slack = _sign_check(op, S_p, values, +1, "B[ξp, ηp]", report, {"p": p.tolist()})
    z_defect, where = _z_matrix_defect(S_p)
    if z_defect > SIGN_TOL * op.norm_bound():
        report.status = CriterionStatus.FAIL
        report.witnesses.append({"matrix": "S_p off-diagonal", "node": where, "defect": z_defect, "p": p.tolist()})
    report.trace_checks.append(_trace_check(grid, values, +1, "ξ_p >= 0"))
    if report.passed:
        report.margin = max(slack, 0.0)
    logger.info("form-sign criterion for p=%s: %s", p.tolist(), report.status.value)
    return report


def check_mueller(coeffs: Union[OperatorCoefficients, AssembledOperator], grid: GridDomain,
                  sigma: Param, tau: Param, assertions: Sequence[str] = ()) -> CriterionReport:
    """
    Componentwise sign conditions for a moving rectangle [σ(x), τ(x)] under a diagonal operator.

    PASS iff B_k[σ_k, η] <= 0 and B_k[τ_k, η] >= 0 for every k and every hat η.
    """
    base = coeffs.coeffs if isinstance(coeffs, AssembledOperator) else coeffs
    if not base.diagonal:
        return CriterionReport("mueller", CriterionStatus.NOT_APPLICABLE, assertions=list(assertions),
                               note="coefficient matrices are not diagonal")
    op = _operator_for(coeffs, grid)
    M = op.M
    lower = evaluate_param(sigma, grid.points, (M,))
    upper = evaluate_param(tau, grid.points, (M,))
    report = CriterionReport("mueller", CriterionStatus.PASS, assertions=list(assertions))
    slack = np.inf
    for k in range(M):
        e = np.zeros(M)
        e[k] = 1.0
        S_k = _scalar_operator(op, e)
        slack = min(slack, _sign_check(op, S_k, lower[:, k], -1, f"B_{k + 1}[σ, η]", report, {"component": k}))
        slack = min(slack, _sign_check(op, S_k, upper[:, k], +1, f"B_{k + 1}[τ, η]", report, {"component": k}))
        z_defect, where = _z_matrix_defect(S_k)
        if z_defect > SIGN_TOL * op.norm_bound():
            report.status = CriterionStatus.FAIL
            report.witnesses.append({"matrix": f"S_{k + 1} off-diagonal", "node": where,
                                     "defect": z_defect, "component": k})
        report.trace_checks.append(_trace_check(grid, lower[:, k], -1, f"σ_{k + 1} <= 0"))
        report.trace_checks.append(_trace_check(grid, upper[:, k], +1, f"τ_{k + 1} >= 0"))
    if report.passed:
        report.margin = max(float(slack), 0.0)
    logger.info("Müller criterion: %s", report.status.value)
    return report
