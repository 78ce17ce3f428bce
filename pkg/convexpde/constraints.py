"""
convexpde Constraint Fields

Closed convex constraint multimaps K(x) ⊂ R^M and their metric projections.

Families:
- Rectangle      K(x) = [σ(x), τ(x)]                   (componentwise clamp)
- Tube           K(x) = b(x) + α(x)·K0, K0 a Ball or Box
- ConstantConvex K(x) = K0
- Ellipsoid      K(x) = E(x)·B, B the closed unit ball   (Lagrange multiplier root-find)
- Polyhedron     K(x) = ∩_j {⟨p_j, u⟩ <= ξ_j(x)}        (dense active-set QP)

Parameters may be constants or callables of the spatial point x. A field bound to a grid
(`field.bind(grid)`) evaluates its data once and projects whole grid functions.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq, linprog

from convexpde.errors import (
    EllipsoidIllConditioned,
    EmptyPolyhedron,
    InvalidConstraint,
    MembershipError,
)
from convexpde.grid import GridDomain, VectorField

logger = logging.getLogger(__name__)

Param = Union[float, Sequence[float], np.ndarray, Callable[[np.ndarray], object]]

MEMBERSHIP_TOL = 1e-10


def evaluate_param(param: Param, points: np.ndarray, shape: tuple) -> np.ndarray:
    """Evaluates a constant or x-callable parameter at every point; result (P, *shape)."""
    P = points.shape[0]
    if callable(param):
        vals = [np.broadcast_to(np.asarray(param(x), dtype=float), shape) for x in points]
        return np.array(vals, dtype=float).reshape((P,) + shape)
    const = np.broadcast_to(np.asarray(param, dtype=float), shape)
    return np.broadcast_to(const, (P,) + shape).copy()


def default_tol_active(u: np.ndarray) -> float:
    return 1e-8 * (1.0 + float(np.linalg.norm(u)))


def _direction_tol(tol_active: float, v: np.ndarray) -> float:
    return tol_active * max(1.0, float(np.linalg.norm(v)))


@dataclass
class TangentQuery:
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    tol_active: Optional[float] = None

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.u = np.atleast_1d(np.asarray(self.u, dtype=float))
        self.v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if self.tol_active is None:
            self.tol_active = default_tol_active(self.u)
        if self.tol_active <= 0:
            raise ValueError("tol_active must be positive")


# --------------------------------------------------------------------------- base sets


class Ball:
    """Closed Euclidean ball of the given radius centred at the origin."""

    name = "ball"

    def __init__(self, radius: float = 1.0):
        if radius <= 0:
            raise InvalidConstraint("ball radius must be positive")
        self.radius = float(radius)

    def project(self, Y: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(Y, axis=-1, keepdims=True)
        scale = np.where(norms > self.radius, self.radius / np.maximum(norms, 1e-300), 1.0)
        return Y * scale

    def tangent(self, y: np.ndarray, v: np.ndarray, tol: float) -> bool:
        if np.linalg.norm(y) < self.radius - tol:
            return True
        return float(np.dot(v, y)) <= _direction_tol(tol, v) * self.radius

    def sup_norm(self) -> float:
        return self.radius

    def describe(self) -> dict:
        return {"base": "ball", "radius": self.radius}


class Box:
    """Closed box [lower, upper] in R^M."""

    name = "box"

    def __init__(self, lower: Sequence[float], upper: Sequence[float]):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise InvalidConstraint("box needs lower <= upper with matching shapes")

    def project(self, Y: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(Y, self.lower), self.upper)

    def tangent(self, y: np.ndarray, v: np.ndarray, tol: float) -> bool:
        return _rectangle_tangent(self.lower, self.upper, y, v, tol)

    def sup_norm(self) -> float:
        return float(np.sqrt(np.sum(np.maximum(self.lower ** 2, self.upper ** 2))))

    def describe(self) -> dict:
        return {"base": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def _rectangle_tangent(lo: np.ndarray, hi: np.ndarray, u: np.ndarray, v: np.ndarray, tol: float) -> bool:
    vtol = _direction_tol(tol, v)
    at_lower = u <= lo + tol
    at_upper = u >= hi - tol
    if np.any(at_lower & (v < -vtol)):
        return False
    if np.any(at_upper & (v > vtol)):
        return False
    return True


# --------------------------------------------------------------------------- fields


class ConstraintField(ABC):
    """A closed convex multimap x ↦ K(x) ⊂ R^M."""

    variant: str = ""

    def __init__(self, M: int, envelope: Optional[Param] = None):
        if M < 1:
            raise InvalidConstraint("M must be >= 1")
        self.M = int(M)
        self.envelope_param = envelope

    # -- per-family hooks
    @abstractmethod
    def params(self, points: np.ndarray) -> Dict[str, np.ndarray]:
        """Evaluates and validates the family data at the given points."""

    @abstractmethod
    def project_params(self, params: Dict[str, np.ndarray], U: np.ndarray) -> np.ndarray:
        """Projects U[i] onto K(points[i]) for every row."""

    @abstractmethod
    def tangent_params(self, node: Dict[str, np.ndarray], u: np.ndarray, v: np.ndarray, tol: float) -> bool:
        """Cone test at a single point whose data is given (no leading axis)."""

    @abstractmethod
    def default_envelope(self, params: Dict[str, np.ndarray]) -> np.ndarray:
        pass

    @abstractmethod
    def describe(self) -> dict:
        pass

    # -- envelope m(x)
    def envelope_values(self, points: np.ndarray, params: Dict[str, np.ndarray]) -> np.ndarray:
        if self.envelope_param is None:
            return self.default_envelope(params)
        return evaluate_param(self.envelope_param, points, ())

    # -- pointwise API
    def _point(self, x) -> np.ndarray:
        return np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)

    def project(self, x, u) -> np.ndarray:
        pts = self._point(x)
        U = np.asarray(u, dtype=float).reshape(1, self.M)
        return self.project_params(self.params(pts), U)[0]

    def distance(self, x, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(np.linalg.norm(u - self.project(x, u)))

    def membership(self, x, u, tol: float) -> bool:
        if tol <= 0:
            raise ValueError("tol must be positive")
        return self.distance(x, u) <= tol

    def tangent_cone_contains(self, query: TangentQuery, tol_mem: float = 1e-8) -> bool:
        if not self.membership(query.x, query.u, tol_mem):
            raise MembershipError(f"base point {query.u} is not in K({query.x})")
        params = self.params(self._point(query.x))
        node = {k: v[0] for k, v in params.items()}
        return self.tangent_params(node, query.u, query.v, query.tol_active)

    def envelope(self, x) -> float:
        pts = self._point(x)
        return float(self.envelope_values(pts, self.params(pts))[0])

    def bind(self, grid_or_points: Union[GridDomain, np.ndarray]) -> "BoundConstraint":
        return BoundConstraint(self, grid_or_points)


class Rectangle(ConstraintField):
    variant = "rectangle"

    def __init__(self, lower: Param, upper: Param, M: int):
        super().__init__(M)
        self.lower = lower
        self.upper = upper

    def params(self, points):
        sigma = evaluate_param(self.lower, points, (self.M,))
        tau = evaluate_param(self.upper, points, (self.M,))
        bad = np.argwhere(sigma > tau)
        if bad.size:
            i, k = bad[0]
            raise InvalidConstraint(
                f"rectangle bounds cross at x={points[i].tolist()}, component {k}: "
                f"σ={sigma[i, k]} > τ={tau[i, k]}"
            )
        return {"sigma": sigma, "tau": tau}

    def project_params(self, params, U):
        return np.minimum(np.maximum(U, params["sigma"]), params["tau"])

    def tangent_params(self, node, u, v, tol):
        return _rectangle_tangent(node["sigma"], node["tau"], u, v, tol)

    def default_envelope(self, params):
        return np.sqrt(np.sum(np.maximum(params["sigma"] ** 2, params["tau"] ** 2), axis=1))

    def describe(self):
        return {"family": self.variant, "M": self.M}


class Tube(ConstraintField):
    variant = "tube"

    def __init__(self, center: Param, scale: Param, M: int, base=None, envelope: Optional[Param] = None):
        super().__init__(M, envelope)
        self.center = center
        self.scale = scale
        self.base = base if base is not None else Ball(1.0)

    def params(self, points):
        b = evaluate_param(self.center, points, (self.M,))
        alpha = evaluate_param(self.scale, points, ())
        if np.any(alpha <= 0):
            i = int(np.argmin(alpha))
            raise InvalidConstraint(f"tube scale α must be positive, got {alpha[i]} at x={points[i].tolist()}")
        return {"b": b, "alpha": alpha}

    def project_params(self, params, U):
        b, alpha = params["b"], params["alpha"][:, None]
        return b + alpha * self.base.project((U - b) / alpha)

    def tangent_params(self, node, u, v, tol):
        y = (u - node["b"]) / node["alpha"]
        return self.base.tangent(y, v, tol / node["alpha"])

    def default_envelope(self, params):
        return np.linalg.norm(params["b"], axis=1) + params["alpha"] * self.base.sup_norm()

    def describe(self):
        return {"family": self.variant, "M": self.M, **self.base.describe()}


class ConstantConvex(Tube):
    """A fixed convex set K(x) = K0 (ball or box)."""

    variant = "constant"

    def __init__(self, base, M: int, envelope: Optional[Param] = None):
        super().__init__(np.zeros(M), 1.0, M, base=base, envelope=envelope)


class Ellipsoid(ConstraintField):
    variant = "ellipsoid"

    def __init__(self, matrix: Param, M: int, det_floor: float = 1e-10, envelope: Optional[Param] = None):
        super().__init__(M, envelope)
        self.matrix = matrix
        self.det_floor = float(det_floor)

    def params(self, points):
        E = evaluate_param(self.matrix, points, (self.M, self.M))
        dets = np.linalg.det(E)
        if np.any(dets < self.det_floor):
            i = int(np.argmin(dets))
            raise EllipsoidIllConditioned(
                f"det E(x) = {dets[i]:.3e} < {self.det_floor:.1e} at x={points[i].tolist()}"
            )
        U, s, Vt = np.linalg.svd(E)
        return {"E": E, "U": U, "s": s, "Vt": Vt}

    @staticmethod
    def _project_one(U: np.ndarray, s: np.ndarray, Vt: np.ndarray, u: np.ndarray) -> np.ndarray:
        c = U.T @ u

        def radius(lam):
            return np.linalg.norm(s * c / (s ** 2 + lam))

        # same expression as psi, so psi(0) < 0 past this point
        if radius(0.0) <= 1.0:
            return u.copy()

        def psi(lam):
            return 1.0 / radius(lam) - 1.0

        lam_hi = 2.0 * float(s.max() * np.linalg.norm(u))
        lam = brentq(psi, 0.0, lam_hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        y = Vt.T @ (s * c / (s ** 2 + lam))
        ny = np.linalg.norm(y)
        if ny > 1.0:
            y = y / ny
        return U @ (s * (Vt @ y))

    def project_params(self, params, U):
        out = np.empty_like(U)
        for i in range(U.shape[0]):
            out[i] = self._project_one(params["U"][i], params["s"][i], params["Vt"][i], U[i])
        return out

    def tangent_params(self, node, u, v, tol):
        E = node["E"]
        yu = np.linalg.solve(E, u)
        if float(np.dot(yu, yu)) < 1.0 - tol:
            return True
        yv = np.linalg.solve(E, v)
        return float(np.dot(yv, yu)) <= _direction_tol(tol, yv)

    def default_envelope(self, params):
        return params["s"].max(axis=1)

    def describe(self):
        return {"family": self.variant, "M": self.M, "det_floor": self.det_floor}


class Polyhedron(ConstraintField):
    variant = "polyhedron"

    def __init__(self, normals: Sequence[Sequence[float]], offsets: Sequence[Param], M: int,
                 envelope: Optional[Param] = None, max_iter: int = 200):
        super().__init__(M, envelope)
        P = np.atleast_2d(np.asarray(normals, dtype=float))
        if P.shape[1] != M:
            raise InvalidConstraint(f"normals must have {M} components")
        if len(offsets) != P.shape[0]:
            raise InvalidConstraint("one offset is required per normal")
        norms = np.linalg.norm(P, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise InvalidConstraint(f"polyhedron normals must be unit vectors, got norms {norms.tolist()}")
        self.normals = P
        self.offsets = list(offsets)
        self.max_iter = max_iter

    def params(self, points):
        xi = np.stack([evaluate_param(o, points, ()) for o in self.offsets], axis=1)
        anchors = np.empty((points.shape[0], self.M))
        for i in range(points.shape[0]):
            anchors[i] = self._feasible_point(xi[i], points[i])
        return {"xi": xi, "anchor": anchors}

    def _feasible_point(self, xi: np.ndarray, x: np.ndarray) -> np.ndarray:
        if xi.size == 1:
            return self.normals[0] * xi[0]
        res = linprog(
            np.zeros(self.M), A_ub=self.normals, b_ub=xi,
            bounds=[(None, None)] * self.M, method="highs",
        )
        if res.status == 2:
            raise EmptyPolyhedron(f"half-space intersection is empty at x={np.asarray(x).tolist()}")
        if not res.success:
            raise EmptyPolyhedron(f"feasibility LP failed at x={np.asarray(x).tolist()}: {res.message}")
        return res.x

    def _project_one(self, xi: np.ndarray, anchor: np.ndarray, u: np.ndarray) -> np.ndarray:
        P = self.normals
        scale = 1.0 + np.linalg.norm(u)
        residual = P @ u - xi
        if np.all(residual <= 1e-14 * scale):
            return u.copy()
        if xi.size == 1:
            return u - max(residual[0], 0.0) * P[0]

        w = anchor.copy()
        working: List[int] = []
        for _ in range(self.max_iter):
            g = w - u
            if working:
                Pw = P[working]
                coef = np.linalg.lstsq(Pw.T, g, rcond=None)[0]
                d = -(g - Pw.T @ coef)
            else:
                coef = np.zeros(0)
                d = -g
            if np.linalg.norm(d) <= 1e-14 * scale:
                mu = -coef
                if not working or mu.min() >= -1e-14 * scale:
                    break
                working.pop(int(np.argmin(mu)))
                continue
            Pd = P @ d
            slack = xi - P @ w
            step, block = 1.0, None
            for j in np.flatnonzero(Pd > 1e-300):
                if j in working:
                    continue
                ratio = max(slack[j], 0.0) / Pd[j]
                if ratio < step:
                    step, block = ratio, int(j)
            w = w + step * d
            if block is not None:
                working.append(block)
        else:
            logger.warning("polyhedron active-set QP hit max_iter=%d", self.max_iter)
        return w

    def project_params(self, params, U):
        out = np.empty_like(U)
        for i in range(U.shape[0]):
            out[i] = self._project_one(params["xi"][i], params["anchor"][i], U[i])
        return out

    def tangent_params(self, node, u, v, tol):
        active = node["xi"] - self.normals @ u <= tol
        if not np.any(active):
            return True
        return bool(np.all(self.normals[active] @ v <= _direction_tol(tol, v)))

    def default_envelope(self, params):
        return np.full(params["xi"].shape[0], np.inf)

    def describe(self):
        return {"family": self.variant, "M": self.M, "normals": self.normals.tolist()}


# --------------------------------------------------------------------------- bound fields


class BoundConstraint:
    """A constraint field with its data evaluated at a fixed set of points (usually a grid)."""

    def __init__(self, field: ConstraintField, grid_or_points: Union[GridDomain, np.ndarray]):
        if isinstance(grid_or_points, GridDomain):
            self.grid: Optional[GridDomain] = grid_or_points
            points = grid_or_points.points
        else:
            self.grid = None
            points = np.atleast_2d(np.asarray(grid_or_points, dtype=float))
        self.field = field
        self.points = points
        self.M = field.M
        self.params = field.params(points)
        self.envelope = field.envelope_values(points, self.params)

        zero = field.project_params(self.params, np.zeros((points.shape[0], self.M)))
        if not np.all(np.isfinite(zero)):
            raise InvalidConstraint("K(x) is empty at some node: projection of 0 failed")
        logger.debug("bound %s constraint on %d points", field.variant, points.shape[0])

    def node(self, i: int) -> Dict[str, np.ndarray]:
        return {k: v[i] for k, v in self.params.items()}

    def project(self, U: np.ndarray) -> np.ndarray:
        return self.field.project_params(self.params, np.asarray(U, dtype=float))

    def distance(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return np.linalg.norm(U - self.project(U), axis=1)

    def violation(self, U: np.ndarray) -> float:
        d = self.distance(U)
        return float(d.max()) if d.size else 0.0

    def contains(self, U: np.ndarray, tol: float) -> np.ndarray:
        return self.distance(U) <= tol

    def tangent(self, i: int, u: np.ndarray, v: np.ndarray, tol_active: Optional[float] = None) -> bool:
        tol = default_tol_active(u) if tol_active is None else tol_active
        return self.field.tangent_params(self.node(i), np.asarray(u, float), np.asarray(v, float), tol)

    def project_field(self, u: VectorField) -> VectorField:
        return u.with_values(self.project(u.values))

    def field_distance_l2(self, u: VectorField) -> float:
        """L²(grid) distance of a grid function to the set of K-valued grid functions."""
        d = self.distance(u.values)
        return float(np.sqrt(u.grid.cell_volume * np.sum(d ** 2)))

    def boundary_points(self, rng: np.random.Generator, spread: float = 3.0) -> np.ndarray:
        """One point of ∂K(x) per node, obtained by projecting far exterior points."""
        finite = np.where(np.isfinite(self.envelope), self.envelope, 1.0)
        directions = rng.standard_normal((self.points.shape[0], self.M))
        directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), 1e-300)
        far = directions * (spread * (1.0 + finite))[:, None]
        anchor = self.project(np.zeros_like(far))
        return self.project(anchor + far)


def project(field: ConstraintField, x, u) -> np.ndarray:
    return field.project(x, u)


def membership(field: ConstraintField, x, u, tol: float) -> bool:
    return field.membership(x, u, tol)


def distance(field: ConstraintField, x, u) -> float:
    return field.distance(x, u)


def tangent_cone_contains(field: ConstraintField, query: TangentQuery, tol_mem: float = 1e-8) -> bool:
    return field.tangent_cone_contains(query, tol_mem)
