"""
convexpde Nonlinearity Module

Forcing terms f(x, u, ξ) with ξ = ∂u ∈ R^{M×N}, their superposition on grid functions,
growth and tangency audits, and the exponent arithmetic behind the a priori bounds.

Built-in forcing terms are registered by name:

    @register_forcing("logistic")
    def logistic(N, M, mu=1.0): ...

and looked up through FORCING_REGISTRY (the problem config refers to them by name).
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from convexpde.constraints import BoundConstraint, ConstraintField, Param, evaluate_param
from convexpde.errors import ExponentOutOfRange, NonFiniteForcing
from convexpde.grid import GridDomain, VectorField, gradient

logger = logging.getLogger(__name__)

GROWTH_SLACK = 1e-6


def exponent_bounds(N: int) -> tuple:
    """Strict upper bounds (s_max, q_max) on the growth exponents in dimension N."""
    return (N + 4.0) / N, (N + 4.0) / (N + 2.0)


def check_exponents(s: float, q: float, N: int):
    s_max, q_max = exponent_bounds(N)
    if s < 1 or not s < s_max:
        raise ExponentOutOfRange(f"s = {s} must satisfy 1 <= s < (N+4)/N = {s_max:.6g} for N = {N}")
    if q < 1 or not q < q_max:
        raise ExponentOutOfRange(f"q = {q} must satisfy 1 <= q < (N+4)/(N+2) = {q_max:.6g} for N = {N}")


class ForcingTerm:
    """
    f(x, u, ξ) -> R^M with declared growth |f| <= β(x) + c(|u|^s + |ξ|^q).

    With vectorized=True the evaluator is called once with arrays of shape
    (P, N), (P, M), (P, M, N); otherwise once per node with single points.
    """

    def __init__(self, evaluator: Callable, M: int, N: int, s: float = 1.0, q: float = 1.0,
                 beta: Param = 0.0, c: float = 1.0, vectorized: bool = False, name: str = "custom"):
        check_exponents(s, q, N)
        if c <= 0:
            raise ValueError("growth constant c must be positive")
        self.evaluator = evaluator
        self.M, self.N = int(M), int(N)
        self.s, self.q = float(s), float(q)
        self.beta = beta
        self.c = float(c)
        self.vectorized = vectorized
        self.name = name

    def evaluate(self, points: np.ndarray, U: np.ndarray, Xi: np.ndarray) -> np.ndarray:
        if self.vectorized:
            out = np.asarray(self.evaluator(points, U, Xi), dtype=float)
        else:
            out = np.array([np.atleast_1d(self.evaluator(x, u, xi)) for x, u, xi in zip(points, U, Xi)],
                           dtype=float)
        if out.ndim == 1 and self.M == 1 and out.shape[0] == U.shape[0]:
            out = out[:, None]
        return np.broadcast_to(out, (U.shape[0], self.M)).copy()

    def growth_bound(self, points: np.ndarray, U: np.ndarray, Xi: np.ndarray) -> np.ndarray:
        beta = evaluate_param(self.beta, points, ())
        u_norm = np.linalg.norm(U, axis=1)
        xi_norm = np.linalg.norm(Xi.reshape(Xi.shape[0], -1), axis=1)
        return beta + self.c * (u_norm ** self.s + xi_norm ** self.q)

    def describe(self) -> dict:
        return {"name": self.name, "M": self.M, "N": self.N, "s": self.s, "q": self.q, "c": self.c}


def superpose(f: ForcingTerm, u: VectorField, grid: Optional[GridDomain] = None) -> VectorField:
    """F(u)(x) = f(x, u(x), ∂u(x)); centred differences, one-sided next to the boundary."""
    if grid is not None:
        grid.check_same(u.grid)
    g = u.grid
    values = f.evaluate(g.points, u.values, gradient(u, one_sided_boundary=True))
    bad = ~np.isfinite(values)
    if np.any(bad):
        node = int(np.argwhere(bad)[0][0])
        raise NonFiniteForcing(f"forcing {f.name} is not finite at node {node}, x={g.points[node].tolist()}")
    return u.with_values(values)


def _bound(field: Union[ConstraintField, BoundConstraint], grid: GridDomain) -> BoundConstraint:
    return field if isinstance(field, BoundConstraint) else field.bind(grid)


@dataclass
class TangencyReport:
    status: str
    n_checked: int
    witness: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def to_dict(self) -> dict:
        return asdict(self)


def audit_tangency(f: ForcingTerm, field: Union[ConstraintField, BoundConstraint], grid: GridDomain,
                   n_boundary_samples: int = 1000, seed: int = 0, xi_scale: float = 1.0) -> TangencyReport:
    """
    Samples u on ∂K(x) (projected exterior points) and random ξ; checks f(x,u,ξ) ∈ T_{K(x)}(u).
    """
    bound = _bound(field, grid)
    rng = np.random.default_rng(seed)
    checked = 0
    while checked < n_boundary_samples:
        U = bound.boundary_points(rng)
        Xi = xi_scale * rng.standard_normal((grid.n_int, f.M, grid.N))
        F = f.evaluate(grid.points, U, Xi)
        for i in range(grid.n_int):
            if checked >= n_boundary_samples:
                break
            checked += 1
            if not bound.tangent(i, U[i], F[i]):
                witness = {"x": grid.points[i].tolist(), "u": U[i].tolist(),
                           "xi": Xi[i].tolist(), "f": F[i].tolist()}
                logger.info("tangency audit FAIL at x=%s", witness["x"])
                return TangencyReport("FAIL", checked, witness)
    return TangencyReport("PASS", checked)


@dataclass
class GrowthReport:
    status: str
    n_checked: int
    worst_ratio: float
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return asdict(self)


def audit_growth(f: ForcingTerm, field: Union[ConstraintField, BoundConstraint], grid: GridDomain,
                 n_samples: int = 10_000, seed: int = 0, xi_scale: float = 3.0) -> GrowthReport:
    """Samples |f(x,u,ξ)| against β(x) + c(|u|^s + |ξ|^q) for u ∈ K(x)."""
    bound = _bound(field, grid)
    rng = np.random.default_rng(seed)
    finite = np.where(np.isfinite(bound.envelope), bound.envelope, 1.0)
    worst, witness, checked = 0.0, None, 0
    while checked < n_samples:
        size = min(grid.n_int, n_samples - checked)
        nodes = rng.choice(grid.n_int, size=size, replace=size > grid.n_int)
        raw = rng.standard_normal((grid.n_int, f.M)) * (2.0 * (1.0 + finite))[:, None]
        U = bound.project(raw)[nodes]
        Xi = xi_scale * rng.standard_normal((size, f.M, grid.N))
        pts = grid.points[nodes]
        F = f.evaluate(pts, U, Xi)
        ratio = np.linalg.norm(F, axis=1) / np.maximum(f.growth_bound(pts, U, Xi), 1e-300)
        k = int(np.argmax(ratio))
        if ratio[k] > worst:
            worst = float(ratio[k])
            witness = {"x": pts[k].tolist(), "u": U[k].tolist(), "f_norm": float(np.linalg.norm(F[k]))}
        checked += size
    status = "PASS" if worst <= 1.0 + GROWTH_SLACK else "FAIL"
    return GrowthReport(status, checked, worst, witness if status == "FAIL" else None)


@dataclass
class AprioriExponents:
    gamma1: float
    gamma2: float
    p_embed: float
    theta1: float
    theta2: float

    def __iter__(self):
        return iter((self.gamma1, self.gamma2, self.p_embed))


def compute_apriori_exponents(s: float, q: float, N: int) -> AprioriExponents:
    """
    Interpolation exponents of the a priori bound.

    θ1 solves s θ1 / 2 = N (s-1)/4 (for N >= 5 the 2** branch s θ̃1 = N (s-1)/4),
    θ2 solves q θ2 / 2 = N (q-1)/4; γ1 = s θ1 / 2, γ2 = q (1 + θ2)/2 and
    p_embed = max(2q, (1/(2s) + 1/N)^{-1}).
    """
    check_exponents(s, q, N)
    if N >= 5:
        theta1 = N * (s - 1.0) / (4.0 * s)
        gamma1 = s * theta1
    else:
        theta1 = N * (s - 1.0) / (2.0 * s)
        gamma1 = s * theta1 / 2.0
    theta2 = N * (q - 1.0) / (2.0 * q)
    gamma2 = q * (1.0 + theta2) / 2.0
    p_embed = max(2.0 * q, 1.0 / (1.0 / (2.0 * s) + 1.0 / N))
    if not (gamma1 < 1.0 and gamma2 < 1.0):
        raise ExponentOutOfRange(f"γ1 = {gamma1}, γ2 = {gamma2} for s={s}, q={q}, N={N}")
    if N >= 3 and not (2.0 <= p_embed < min(2.0 * N / (N - 2.0), float(N))):
        raise ExponentOutOfRange(f"p_embed = {p_embed} outside [2, min(2*, N)) for N = {N}")
    return AprioriExponents(gamma1, gamma2, p_embed, theta1, theta2)


# --------------------------------------------------------------------------- registry

FORCING_REGISTRY: Dict[str, Callable[..., ForcingTerm]] = {}


def register_forcing(name: str):
    """Decorator registering a factory (N, M, **params) -> ForcingTerm under `name`."""

    def decorator(factory):
        if name in FORCING_REGISTRY:
            raise ValueError(f"forcing '{name}' is already registered")
        FORCING_REGISTRY[name] = factory
        return factory

    return decorator


def make_forcing(name: str, N: int, M: int, **params) -> ForcingTerm:
    if name not in FORCING_REGISTRY:
        raise KeyError(f"unknown forcing '{name}'; known: {sorted(FORCING_REGISTRY)}")
    return FORCING_REGISTRY[name](N, M, **params)


@register_forcing("zero")
def zero(N: int, M: int) -> ForcingTerm:
    return ForcingTerm(lambda x, U, Xi: np.zeros_like(U), M, N, beta=0.0, c=1.0, vectorized=True, name="zero")


@register_forcing("logistic")
def logistic(N: int, M: int, mu: float = 1.0) -> ForcingTerm:
    """f_k = μ u_k (1 - u_k)."""
    def f(x, U, Xi):
        return mu * U * (1.0 - U)

    return ForcingTerm(f, M, N, s=min(2.0, _admissible_s(N)), beta=abs(mu) * (M / 4.0 + M),
                       c=2.0 * abs(mu) + 1.0, vectorized=True, name="logistic")


def _admissible_s(N: int) -> float:
    s_max, _ = exponent_bounds(N)
    return 1.0 + 0.5 * (s_max - 1.0)


@register_forcing("lotka_volterra")
def lotka_volterra(N: int, M: int, rate: float = 1.0, coupling: float = 0.5, source: float = 0.0) -> ForcingTerm:
    """
    Cooperative two-species growth with saturated migration:

        f_k = r u_k (1 - u_k) + b (sat(u_j) - sat(u_k)) + g (1 - u_k),   sat(y) = 2y / (1 + |y|)

    tangent to [0,1]^2 for r, b, g >= 0.
    """
    if M != 2:
        raise ValueError("lotka_volterra is a two-component system")

    def sat(y):
        return 2.0 * y / (1.0 + np.abs(y))

    def f(x, U, Xi):
        u, v = U[:, 0], U[:, 1]
        fu = rate * u * (1.0 - u) + coupling * (sat(v) - sat(u)) + source * (1.0 - u)
        fv = rate * v * (1.0 - v) + coupling * (sat(u) - sat(v)) + source * (1.0 - v)
        return np.stack([fu, fv], axis=1)

    beta = abs(rate) + 8.0 * abs(coupling) + 3.0 * abs(source)
    return ForcingTerm(f, M, N, s=min(2.0, _admissible_s(N)), beta=beta,
                       c=2.0 * abs(rate) + abs(source) + 1.0, vectorized=True, name="lotka_volterra")


@register_forcing("linear")
def linear(N: int, M: int, matrix: Optional[Sequence] = None, vector: Optional[Sequence] = None) -> ForcingTerm:
    """f = L u + g with constant L (M×M) and g."""
    L = np.zeros((M, M)) if matrix is None else np.asarray(matrix, dtype=float).reshape(M, M)
    g = np.zeros(M) if vector is None else np.broadcast_to(np.asarray(vector, dtype=float), (M,)).copy()

    def f(x, U, Xi):
        return U @ L.T + g

    return ForcingTerm(f, M, N, beta=float(np.linalg.norm(g)), c=max(float(np.linalg.norm(L, 2)), 1e-12),
                       vectorized=True, name="linear")


@register_forcing("manufactured")
def manufactured(N: int, M: int, amplitude: float = 0.4, R: float = 0.5) -> ForcingTerm:
    """
    f = g(x)(1 - u) with g = (π/2R)^2 a sin(π(x_1 + R)/2R); on [-0.5, 0.5] this is π² a sin(π(x+0.5)).
    """
    if M != 1:
        raise ValueError("manufactured forcing is scalar")
    k = np.pi / (2.0 * R)

    def f(x, U, Xi):
        g = k ** 2 * amplitude * np.sin(k * (x[:, 0] + R))
        return (g * (1.0 - U[:, 0]))[:, None]

    peak = k ** 2 * abs(amplitude)
    return ForcingTerm(f, M, N, beta=peak, c=peak + 1e-12, vectorized=True, name="manufactured")


def manufactured_source(points: np.ndarray, amplitude: float = 0.4, R: float = 0.5) -> np.ndarray:
    k = np.pi / (2.0 * R)
    return k ** 2 * amplitude * np.sin(k * (points[:, 0] + R))
