"""
convexpde Degree Module

Brouwer degree of small maps g: R^d -> R^d (d <= 3) on boxes, by brute force:

- zeros located by a dense grid scan (discrete local minima of |g|) and refined with
  scipy.optimize.root
- degree = Σ sign det Dg(z) over the zeros (finite-difference Jacobians)
- for d = 2 cross-checked against the winding number of g along the box boundary

`finite_phi` builds the projected-resolvent map φ_h on R^d, so that I - φ_h can be fed to
the degree checker; for convex K its degree on a box containing K is χ(K) = 1.
"""

import logging
from typing import Callable, List, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.ndimage import minimum_filter
from scipy.optimize import root

from convexpde.errors import DegenerateZero, DegreeMismatch, ZeroOnBoundary

logger = logging.getLogger(__name__)

Box = Sequence[Tuple[float, float]]
VectorMap = Callable[[np.ndarray], np.ndarray]


def _check_box(box: Box) -> np.ndarray:
    arr = np.asarray(box, dtype=float).reshape(-1, 2)
    if not 1 <= arr.shape[0] <= 3:
        raise ValueError("degree checker supports dimensions 1 to 3")
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ValueError(f"box has empty sides: {arr.tolist()}")
    return arr


def _boundary_samples(box: np.ndarray, n: int) -> np.ndarray:
    d = box.shape[0]
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    pts = []
    for axis in range(d):
        for side in (0, 1):
            grids = list(axes)
            grids[axis] = np.array([box[axis, side]])
            mesh = np.meshgrid(*grids, indexing="ij")
            pts.append(np.stack([m.reshape(-1) for m in mesh], axis=1))
    return np.vstack(pts)


def _jacobian(g: VectorMap, z: np.ndarray) -> np.ndarray:
    d = z.size
    J = np.empty((d, d))
    for j in range(d):
        step = 1e-6 * (1.0 + abs(z[j]))
        e = np.zeros(d)
        e[j] = step
        J[:, j] = (np.asarray(g(z + e)) - np.asarray(g(z - e))) / (2.0 * step)
    return J


def locate_zeros(g: VectorMap, box: Box, grid_density: int = 21, tol: float = 1e-9) -> List[np.ndarray]:
    """Distinct zeros of g inside the box."""
    arr = _check_box(box)
    d = arr.shape[0]
    axes = [np.linspace(lo, hi, grid_density) for lo, hi in arr]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    values = np.array([np.linalg.norm(g(p)) for p in pts]).reshape((grid_density,) * d)
    candidates = np.argwhere(values <= minimum_filter(values, size=3, mode="nearest"))

    diameter = float(np.linalg.norm(arr[:, 1] - arr[:, 0]))
    scale = 1.0 + float(values.max())
    zeros: List[np.ndarray] = []
    for idx in candidates:
        x0 = np.array([axes[k][i] for k, i in enumerate(idx)])
        sol = root(lambda z: np.asarray(g(z), dtype=float), x0, method="hybr", tol=1e-13)
        z = sol.x
        inside = np.all(z >= arr[:, 0] - 1e-10 * diameter) and np.all(z <= arr[:, 1] + 1e-10 * diameter)
        if not inside or np.linalg.norm(g(z)) > tol * scale:
            continue
        if all(np.linalg.norm(z - other) > 1e-6 * diameter for other in zeros):
            zeros.append(z)
    return zeros


def winding_number(g: VectorMap, box: Box, n: int = 400) -> int:
    """Winding number of g around 0 along the counter-clockwise boundary of a 2-D box."""
    arr = _check_box(box)
    if arr.shape[0] != 2:
        raise ValueError("winding number needs a 2-D box")
    (x0, x1), (y0, y1) = arr
    s = np.linspace(0.0, 1.0, n, endpoint=False)
    path = np.vstack([
        np.stack([x0 + (x1 - x0) * s, np.full(n, y0)], axis=1),
        np.stack([np.full(n, x1), y0 + (y1 - y0) * s], axis=1),
        np.stack([x1 - (x1 - x0) * s, np.full(n, y1)], axis=1),
        np.stack([np.full(n, x0), y1 - (y1 - y0) * s], axis=1),
    ])
    values = np.array([g(p) for p in path])
    if np.any(np.linalg.norm(values, axis=1) == 0):
        raise ZeroOnBoundary("g vanishes on the winding path")
    angles = np.arctan2(values[:, 1], values[:, 0])
    steps = np.diff(np.append(angles, angles[0]))
    steps = (steps + np.pi) % (2.0 * np.pi) - np.pi
    return int(round(steps.sum() / (2.0 * np.pi)))


def brouwer_degree_small(g: VectorMap, box: Box, grid_density: int = 21, det_tol: float = 1e-8,
                         boundary_margin: float = 1e-8, cross_check: bool = True) -> int:
    """
    deg(g, box, 0) by zero enumeration and Jacobian signs.

    Raises ZeroOnBoundary when |g| <= boundary_margin somewhere on the sampled boundary,
    DegenerateZero when a zero has |det Dg| < det_tol and DegreeMismatch when the 2-D
    winding number disagrees.
    """
    arr = _check_box(box)
    boundary = _boundary_samples(arr, max(grid_density, 4) * 4)
    smallest = min(float(np.linalg.norm(g(p))) for p in boundary)
    if smallest <= boundary_margin:
        raise ZeroOnBoundary(f"|g| = {smallest:.3e} on the box boundary")

    degree = 0
    for z in locate_zeros(g, arr, grid_density):
        det = float(np.linalg.det(_jacobian(g, z)))
        if abs(det) < det_tol:
            raise DegenerateZero(f"det Dg = {det:.3e} at zero {z.tolist()}")
        degree += 1 if det > 0 else -1
        logger.debug("zero at %s with det %.3e", z.tolist(), det)

    if cross_check and arr.shape[0] == 2:
        wn = winding_number(g, arr)
        if wn != degree:
            raise DegreeMismatch(f"zero count gives {degree}, boundary winding gives {wn}")
    return degree


def finite_phi(A: np.ndarray, F: VectorMap, project: VectorMap, h: float) -> VectorMap:
    """φ_h(u) = (I + hA)^{-1} project(u + h F(u)) on R^d."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lu = scipy.linalg.lu_factor(np.eye(A.shape[0]) + h * A)

    def phi(u):
        u = np.asarray(u, dtype=float)
        return scipy.linalg.lu_solve(lu, project(u + h * np.asarray(F(u), dtype=float)))

    return phi


def identity_minus(phi: VectorMap) -> VectorMap:
    return lambda u: np.asarray(u, dtype=float) - phi(u)


def box_projection(lower: Sequence[float], upper: Sequence[float]) -> VectorMap:
    lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    return lambda u: np.clip(u, lo, hi)


def random_tangent_fields(rng: np.random.Generator, count: int, d: int = 2):
    """
    (A, F, lower, upper) tuples: diagonal A > 0, box K ∋ 0 and F(u) = -D(u - z), z inside K.
    F points into K on every face, so K is invariant and I - φ_h has degree 1 on boxes ⊃ K.
    """
    out = []
    for _ in range(count):
        lower = -rng.uniform(0.5, 2.0, size=d)
        upper = rng.uniform(0.5, 2.0, size=d)
        z = lower + (upper - lower) * rng.uniform(0.2, 0.8, size=d)
        D = rng.uniform(0.5, 3.0, size=d)
        A = np.diag(rng.uniform(0.5, 3.0, size=d))
        out.append((A, (lambda u, D=D, z=z: -D * (u - z)), lower, upper))
    return out
