"""
convexpde Elliptic Operator

Divergence-form operator

    P[u] = -Σ_ij ∂_i(A^{ij} ∂_j u) + Σ_i B^i ∂_i u + C u,   u: [-R,R]^N -> R^M,

its finite-difference stiffness matrix S on a GridDomain (homogeneous Dirichlet data
eliminated) and the associated bilinear form B[u, v] = <S u, v> Δx^N.

Stencils:
- diagonal second-order terms: flux differencing with face-centred coefficients
- mixed second-order terms:   centred differences with node coefficients
- drift:                      centred differences (upwind optional, diagonal drift only)
- reaction:                   pointwise
"""

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from convexpde.errors import (
    EigSolverFailure,
    EllipticityViolation,
    GridMismatch,
    NonFiniteCoefficient,
    SingularSystem,
)
from convexpde.grid import GridDomain, VectorField, face_differences, gradient

logger = logging.getLogger(__name__)

Coefficient = Union[float, Sequence, np.ndarray, Callable[[np.ndarray], object]]

DENSE_EIG_LIMIT = 3000
DIRECT_SOLVE_LIMIT = 100_000


def _eval_matrix(coef: Optional[Coefficient], points: np.ndarray, M: int) -> np.ndarray:
    """(P, M, M) values of a matrix coefficient; scalars mean multiples of I, 1-D arrays diagonals."""
    P = points.shape[0]
    if coef is None:
        return np.zeros((P, M, M))
    if callable(coef):
        return np.array([_as_matrix(coef(x), M) for x in points], dtype=float).reshape(P, M, M)
    return np.broadcast_to(_as_matrix(coef, M), (P, M, M)).copy()


def _as_matrix(value, M: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(M)
    if arr.ndim == 1:
        return np.diag(np.broadcast_to(arr, (M,)))
    return arr.reshape(M, M)


def _is_diagonal_constant(coef) -> Optional[bool]:
    if coef is None:
        return True
    if callable(coef):
        return None
    arr = np.asarray(coef, dtype=float)
    if arr.ndim <= 1:
        return True
    return bool(np.allclose(arr, np.diag(np.diag(arr)), atol=0.0))


class OperatorCoefficients:
    """
    Coefficient families of the operator: A[i][j], B[i] (may be None) and C (may be None).

    Each entry is a constant (scalar = multiple of I, vector = diagonal, M×M matrix)
    or a callable x -> R^{M×M}. `diagonal` must be declared when callables are used.
    """

    def __init__(self, N: int, M: int, A: Sequence[Sequence[Coefficient]],
                 B: Optional[Sequence[Optional[Coefficient]]] = None,
                 C: Optional[Coefficient] = None,
                 diagonal: Optional[bool] = None, upwind: bool = False):
        if len(A) != N or any(len(row) != N for row in A):
            raise ValueError(f"A must be an {N}x{N} table of coefficients")
        if B is not None and len(B) != N:
            raise ValueError(f"B must have {N} entries")
        self.N, self.M = int(N), int(M)
        self.A = [list(row) for row in A]
        self.B = list(B) if B is not None else [None] * N
        self.C = C
        self.upwind = upwind

        detected = [_is_diagonal_constant(c) for row in self.A for c in row]
        detected += [_is_diagonal_constant(c) for c in self.B] + [_is_diagonal_constant(C)]
        if diagonal is None:
            self.diagonal = all(d is True for d in detected)
        else:
            if diagonal and any(d is False for d in detected):
                raise ValueError("coefficients declared diagonal but a constant entry is not")
            self.diagonal = bool(diagonal)

    @property
    def constant_A(self) -> bool:
        return not any(callable(c) for row in self.A for c in row)

    @classmethod
    def laplacian(cls, N: int, M: int, scale: float = 1.0) -> "OperatorCoefficients":
        A = [[scale if i == j else 0.0 for j in range(N)] for i in range(N)]
        return cls(N, M, A)

    @classmethod
    def diagonal_system(cls, N: int, M: int, diffusion: Sequence[float],
                        reaction: Optional[Sequence[float]] = None,
                        drift: Optional[Sequence[Sequence[float]]] = None,
                        upwind: bool = False) -> "OperatorCoefficients":
        d = np.broadcast_to(np.asarray(diffusion, dtype=float), (M,))
        A = [[d.copy() if i == j else 0.0 for j in range(N)] for i in range(N)]
        B = [np.asarray(drift[i], dtype=float) for i in range(N)] if drift is not None else None
        C = np.asarray(reaction, dtype=float) if reaction is not None else None
        return cls(N, M, A, B, C, diagonal=True, upwind=upwind)

    @classmethod
    def from_arrays(cls, A: np.ndarray, B: Optional[np.ndarray] = None,
                    C: Optional[np.ndarray] = None) -> "OperatorCoefficients":
        """Constant coefficients from arrays A[i, j] (N,N,M,M), B[i] (N,M,M), C (M,M)."""
        A = np.asarray(A, dtype=float)
        N, M = A.shape[0], A.shape[2]
        table = [[A[i, j] for j in range(N)] for i in range(N)]
        drift = [np.asarray(B, dtype=float)[i] for i in range(N)] if B is not None else None
        return cls(N, M, table, drift, C)

    # pointwise evaluators
    def second_order(self, i: int, j: int, x) -> np.ndarray:
        return _eval_matrix(self.A[i][j], np.atleast_2d(x), self.M)[0]

    def drift(self, i: int, x) -> np.ndarray:
        return _eval_matrix(self.B[i], np.atleast_2d(x), self.M)[0]

    def reaction(self, x) -> np.ndarray:
        return _eval_matrix(self.C, np.atleast_2d(x), self.M)[0]

    def legendre_matrices(self, points: np.ndarray) -> np.ndarray:
        """(P, MN, MN) matrices with entry [(k,i),(l,j)] = A^{ij}_{kl}."""
        N, M = self.N, self.M
        table = np.empty((points.shape[0], N, N, M, M))
        for i in range(N):
            for j in range(N):
                table[:, i, j] = _eval_matrix(self.A[i][j], points, M)
        return table.transpose(0, 3, 1, 4, 2).reshape(points.shape[0], M * N, M * N)


def ellipticity_constants(coeffs: OperatorCoefficients, points: np.ndarray,
                          rng: Optional[np.random.Generator] = None,
                          n_rank_one: int = 200) -> Tuple[float, float]:
    """Legendre constant θ (exact, per point) and a sampled Legendre–Hadamard constant."""
    rng = rng or np.random.default_rng(0)
    big = coeffs.legendre_matrices(points)
    if not np.all(np.isfinite(big)):
        raise NonFiniteCoefficient("second-order coefficients are not finite on the sample")
    sym = 0.5 * (big + big.transpose(0, 2, 1))
    theta = float(np.min(np.linalg.eigvalsh(sym)[:, 0]))

    N, M = coeffs.N, coeffs.M
    p = rng.standard_normal((n_rank_one, N))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    z = rng.standard_normal((n_rank_one, M))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    xi = np.einsum("sk,si->ski", z, p).reshape(n_rank_one, M * N)
    quad = np.einsum("sa,pab,sb->ps", xi, big, xi)
    theta_lh = float(quad.min())
    return theta, theta_lh


# --------------------------------------------------------------------------- stencils


def _first_difference(n: int, dx: float) -> sp.csr_matrix:
    """(n+1) x n forward differences onto faces; boundary values are zero."""
    return ((sp.eye(n + 1, n, k=0) - sp.eye(n + 1, n, k=-1)) / dx).tocsr()


def _centered_difference(n: int, dx: float) -> sp.csr_matrix:
    return ((sp.eye(n, k=1) - sp.eye(n, k=-1)) / (2.0 * dx)).tocsr()


def _one_sided(n: int, dx: float, forward: bool) -> sp.csr_matrix:
    if forward:
        return ((sp.eye(n, k=1) - sp.eye(n)) / dx).tocsr()
    return ((sp.eye(n) - sp.eye(n, k=-1)) / dx).tocsr()


def _along_axis(op1d: sp.spmatrix, axis: int, N: int, n: int) -> sp.csr_matrix:
    mats = [sp.identity(n, format="csr")] * N
    mats[axis] = op1d
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def _block(op: sp.spmatrix, M: int) -> sp.csr_matrix:
    return sp.kron(op, sp.identity(M, format="csr"), format="csr")


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    P, M, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(P), np.arange(P + 1)), shape=(P * M, P * M)).tocsr()


def face_points(grid: GridDomain, axis: int) -> np.ndarray:
    """Face centres between consecutive nodes along `axis` (boundary faces included)."""
    faces = -grid.R + grid.dx * (np.arange(grid.n_per_axis + 1) + 0.5)
    axes = [grid.axis] * grid.N
    axes[axis] = faces
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _checked(values: np.ndarray, what: str, points: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0][0]
        raise NonFiniteCoefficient(f"{what} is not finite at x={points[bad].tolist()}")
    return values


@dataclass
class GardingCertificate:
    omega: float
    alpha: float
    lambda_min: float
    sample_slack: float

    def __iter__(self):
        return iter((self.omega, self.alpha))


class AssembledOperator:
    """Sparse stiffness matrix of P on a grid, with cached (I + hS) factorizations."""

    def __init__(self, coeffs: OperatorCoefficients, grid: GridDomain, S: sp.csr_matrix,
                 theta: float, theta_lh: float, continuity: float):
        self.coeffs = coeffs
        self.grid = grid
        self.M = coeffs.M
        self.S = S
        self.theta = theta
        self.theta_lh = theta_lh
        self.continuity = continuity
        self._factors: Dict[float, object] = {}
        self._lock = threading.Lock()
        self._gram: Optional[sp.csr_matrix] = None

    @property
    def size(self) -> int:
        return self.S.shape[0]

    @property
    def mass(self) -> float:
        return self.grid.cell_volume

    def apply(self, u: VectorField) -> VectorField:
        self.grid.check_same(u.grid)
        return VectorField.from_flat(self.grid, self.S @ u.flat(), self.M)

    def norm_bound(self) -> float:
        """Upper bound for the spectral norm: sqrt(‖S‖_1 ‖S‖_inf)."""
        abs_s = abs(self.S)
        one = float(abs_s.sum(axis=0).max())
        inf = float(abs_s.sum(axis=1).max())
        return float(np.sqrt(one * inf))

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        diff = self.S - self.S.T
        return diff.nnz == 0 or float(abs(diff).max()) <= tol * max(1.0, float(abs(self.S).max()))

    def symmetric_part(self) -> sp.csr_matrix:
        return ((self.S + self.S.T) * 0.5).tocsr()

    def h1_norm(self, u: VectorField) -> float:
        """Discrete H¹ norm induced by gram()."""
        x = u.flat()
        return float(np.sqrt(np.dot(x, self.gram() @ x) * self.mass))

    def gram(self) -> sp.csr_matrix:
        """Discrete H¹ Gram matrix I + Σ_i F_iᵀF_i (same face stencil as the solver)."""
        if self._gram is None:
            g = self.grid
            F = _first_difference(g.n_per_axis, g.dx)
            lap = sum(
                (_along_axis(F, i, g.N, g.n_per_axis).T @ _along_axis(F, i, g.N, g.n_per_axis))
                for i in range(g.N)
            )
            self._gram = (sp.identity(self.size, format="csr") + _block(lap, self.M)).tocsr()
        return self._gram

    def factorization(self, h: float):
        """splu handle of I + hS (None above the direct-solve limit); cached per h."""
        key = float(h)
        with self._lock:
            if key in self._factors:
                return self._factors[key]
            if self.size > DIRECT_SOLVE_LIMIT:
                handle = None
            else:
                system = (sp.identity(self.size, format="csc") + key * self.S).tocsc()
                try:
                    handle = spla.splu(system)
                except RuntimeError as e:
                    raise SingularSystem(f"I + hS is singular for h={key}: {e}") from e
            self._factors[key] = handle
            logger.debug("factorized I + hS for h=%g (%d unknowns)", key, self.size)
            return handle

    def spectral_bounds(self) -> Tuple[float, float]:
        """Smallest and largest eigenvalue of the symmetric part of S."""
        sym = self.symmetric_part()
        try:
            if self.size <= DENSE_EIG_LIMIT:
                vals = scipy.linalg.eigvalsh(sym.toarray())
                return float(vals[0]), float(vals[-1])
            lo = spla.eigsh(sym, k=1, which="SA", return_eigenvectors=False, tol=1e-8)[0]
            hi = spla.eigsh(sym, k=1, which="LA", return_eigenvectors=False, tol=1e-8)[0]
            return float(lo), float(hi)
        except (np.linalg.LinAlgError, spla.ArpackNoConvergence, spla.ArpackError) as e:
            raise EigSolverFailure(f"eigenvalue computation failed: {e}") from e


def assemble(coeffs: OperatorCoefficients, grid: GridDomain, sample_size: int = 100,
             seed: int = 0) -> AssembledOperator:
    """Assembles S on the grid after checking ellipticity on a sample of nodes."""
    if coeffs.N != grid.N:
        raise GridMismatch(f"coefficients are {coeffs.N}-dimensional, grid is {grid.N}-dimensional")
    N, M, n, dx = grid.N, coeffs.M, grid.n_per_axis, grid.dx
    rng = np.random.default_rng(seed)
    pts = grid.points
    sample = pts if pts.shape[0] <= sample_size else pts[rng.choice(pts.shape[0], sample_size, replace=False)]
    theta, theta_lh = ellipticity_constants(coeffs, sample, rng)
    if theta <= 0:
        raise EllipticityViolation(f"Legendre quadratic form is not positive: θ = {theta:.3e}")

    F1 = _first_difference(n, dx)
    D1 = _centered_difference(n, dx)
    size = grid.n_int * M
    S = sp.csr_matrix((size, size))
    sup = 0.0

    for i in range(N):
        fpts = face_points(grid, i)
        Ai = _checked(_eval_matrix(coeffs.A[i][i], fpts, M), f"A^{i}{i}", fpts)
        sup += float(np.max(np.linalg.norm(Ai, ord=2, axis=(1, 2))))
        Fi = _block(_along_axis(F1, i, N, n), M)
        S = S + Fi.T @ _block_diag(Ai) @ Fi

    Di = [_block(_along_axis(D1, i, N, n), M) for i in range(N)]
    for i in range(N):
        for j in range(N):
            if i == j or coeffs.A[i][j] is None:
                continue
            Aij = _checked(_eval_matrix(coeffs.A[i][j], pts, M), f"A^{i}{j}", pts)
            if not np.any(Aij):
                continue
            sup += float(np.max(np.linalg.norm(Aij, ord=2, axis=(1, 2))))
            S = S + Di[i].T @ _block_diag(Aij) @ Di[j]

    for i in range(N):
        if coeffs.B[i] is None:
            continue
        Bi = _checked(_eval_matrix(coeffs.B[i], pts, M), f"B^{i}", pts)
        sup += float(np.max(np.linalg.norm(Bi, ord=2, axis=(1, 2))))
        if coeffs.upwind and coeffs.diagonal:
            fwd = _block(_along_axis(_one_sided(n, dx, True), i, N, n), M)
            bwd = _block(_along_axis(_one_sided(n, dx, False), i, N, n), M)
            S = S + _block_diag(np.maximum(Bi, 0.0)) @ bwd + _block_diag(np.minimum(Bi, 0.0)) @ fwd
        else:
            if coeffs.upwind:
                logger.warning("upwinding needs diagonal drift; using centred differences")
            S = S + _block_diag(Bi) @ Di[i]

    if coeffs.C is not None:
        Cx = _checked(_eval_matrix(coeffs.C, pts, M), "C", pts)
        sup += float(np.max(np.linalg.norm(Cx, ord=2, axis=(1, 2))))
        S = S + _block_diag(Cx)

    S = sp.csr_matrix(S)
    S.eliminate_zeros()
    logger.info("assembled operator: N=%d M=%d n=%d θ=%.3g nnz=%d", N, M, n, theta, S.nnz)
    return AssembledOperator(coeffs, grid, S, theta, theta_lh, sup)


def bilinear_form(op: AssembledOperator, u: VectorField, v: VectorField) -> float:
    """B[u, v] = <S u, v> Δx^N."""
    op.grid.check_same(u.grid)
    op.grid.check_same(v.grid)
    if u.M != op.M or v.M != op.M:
        raise GridMismatch(f"fields must have {op.M} components")
    return float(np.dot(op.S @ u.flat(), v.flat()) * op.mass)


@dataclass
class FormValue:
    value: float
    continuity: float
    bound: float

    def to_dict(self) -> dict:
        return {"value": self.value, "continuity": self.continuity, "bound": self.bound}


def evaluate_form(op: AssembledOperator, u: VectorField, v: VectorField) -> FormValue:
    """
    B[u, v] together with the continuity constant c and the bound c‖u‖_{H¹}‖v‖_{H¹}.

    c is the sum of the coefficient sup-norms; the H¹ norms use the same face stencil as S.
    """
    value = bilinear_form(op, u, v)
    return FormValue(value=value, continuity=op.continuity,
                     bound=op.continuity * op.h1_norm(u) * op.h1_norm(v))


def quadrature_form(coeffs: OperatorCoefficients, grid: GridDomain, u: VectorField, v: VectorField) -> float:
    """B[u, v] by direct face/node quadrature of the weak form, without the stiffness matrix."""
    M = coeffs.M
    total = 0.0
    Fu, Fv = face_differences(u), face_differences(v)
    for i in range(grid.N):
        fpts = face_points(grid, i)
        Ai = _eval_matrix(coeffs.A[i][i], fpts, M)
        total += float(np.einsum("pkl,pl,pk->", Ai, Fu[i].reshape(-1, M), Fv[i].reshape(-1, M)))
    gu, gv = gradient(u), gradient(v)
    pts = grid.points
    for i in range(grid.N):
        for j in range(grid.N):
            if i != j and coeffs.A[i][j] is not None:
                Aij = _eval_matrix(coeffs.A[i][j], pts, M)
                total += float(np.einsum("pkl,pl,pk->", Aij, gu[:, :, j], gv[:, :, i]))
        if coeffs.B[i] is not None:
            Bi = _eval_matrix(coeffs.B[i], pts, M)
            total += float(np.einsum("pkl,pl,pk->", Bi, gu[:, :, i], v.values))
    if coeffs.C is not None:
        total += float(np.einsum("pkl,pl,pk->", _eval_matrix(coeffs.C, pts, M), u.values, v.values))
    return total * grid.cell_volume


def _lambda_min(A: sp.spmatrix, B: Optional[sp.spmatrix] = None) -> float:
    try:
        if A.shape[0] <= DENSE_EIG_LIMIT:
            dense_b = None if B is None else B.toarray()
            return float(scipy.linalg.eigh(A.toarray(), dense_b, eigvals_only=True, subset_by_index=[0, 0])[0])
        return float(spla.eigsh(A, k=1, M=B, which="SA", return_eigenvectors=False, tol=1e-10)[0])
    except (np.linalg.LinAlgError, spla.ArpackNoConvergence, spla.ArpackError, ValueError) as e:
        raise EigSolverFailure(f"eigenvalue computation failed: {e}") from e


def verify_garding(op: AssembledOperator, omega: float, alpha: float, n_samples: int = 1000,
                   seed: int = 0) -> float:
    """
    Smallest relative slack of B[u,u] + ω‖u‖² - α‖u‖²_{H¹} over random fields.
    Non-negative (up to round-off) when the certificate holds.
    """
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((op.size, n_samples))
    G = op.gram()
    form = np.einsum("ij,ij->j", U, op.S @ U)
    l2 = np.einsum("ij,ij->j", U, U)
    h1 = np.einsum("ij,ij->j", U, G @ U)
    return float(np.min((form + omega * l2 - alpha * h1) / h1))


def estimate_garding(op: AssembledOperator, alpha: Optional[float] = None, floor: float = 1e-6,
                     n_check: int = 1000, seed: int = 0) -> GardingCertificate:
    """
    Weak-coercivity constants (ω, α) with B[u,u] + ω‖u‖²_{L²} >= α‖u‖²_{H¹} on the grid.

    ω = 0 is preferred whenever the operator is coercive; otherwise α = max(θ/2, floor)
    and ω is the smallest shift that makes S_sym + ωI - αG positive semidefinite.
    """
    sym = op.symmetric_part()
    G = op.gram()
    mu = _lambda_min(sym, G)
    if alpha is None:
        alpha = max(op.theta / 2.0, floor)
        if mu > floor:
            alpha = max(min(alpha, mu), floor)
    shifted = _lambda_min((sym - alpha * G).tocsr())
    omega = max(0.0, -shifted)
    if omega > 0.0:
        omega *= 1.0 + 1e-10
    slack = verify_garding(op, omega, alpha, n_check, seed)
    if slack < -1e-9:
        raise EigSolverFailure(f"Gårding certificate failed on the sample (slack {slack:.3e})")
    logger.info("Gårding constants: ω=%.6g α=%.6g (λ_min=%.6g)", omega, alpha, mu)
    return GardingCertificate(omega=omega, alpha=alpha, lambda_min=mu, sample_slack=slack)
