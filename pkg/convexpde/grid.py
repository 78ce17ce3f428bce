"""
convexpde Grid Module

Uniform tensor grids over boxes [-R, R]^N with homogeneous Dirichlet data and the
grid functions living on their interior nodes.

- Interior nodes are indexed lexicographically (last axis fastest)
- Fields are stored node-major: values[node, component]
- All difference quotients treat the (absent) boundary nodes as zeros
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np

from convexpde.errors import GridMismatch


@dataclass(frozen=True)
class GridDomain:
    """
    Interior nodes of the box [-R, R]^N with n_per_axis nodes per axis.

    Boundary nodes (the faces of the box) are not unknowns; every field vanishes there.
    """

    N: int
    R: float
    n_per_axis: int

    def __post_init__(self):
        if not 1 <= self.N <= 3:
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.N}")
        if self.R <= 0:
            raise ValueError("half-width R must be positive")
        if self.n_per_axis < 1:
            raise ValueError("n_per_axis must be >= 1")

    @classmethod
    def from_spacing(cls, N: int, R: float, dx: float) -> "GridDomain":
        """Grid of half-width R whose spacing is exactly dx (2R/dx must be an integer)."""
        cells = 2.0 * R / dx
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ValueError(f"2R/dx = {cells} is not an integer; box edges would miss the grid")
        return cls(N, R, int(round(cells)) - 1)

    @property
    def dx(self) -> float:
        return 2.0 * self.R / (self.n_per_axis + 1)

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.N

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_per_axis,) * self.N

    @property
    def n_int(self) -> int:
        return self.n_per_axis ** self.N

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.R + self.dx * np.arange(1, self.n_per_axis + 1)

    @cached_property
    def points(self) -> np.ndarray:
        """Coordinates of the interior nodes, shape (n_int, N), lexicographic order."""
        mesh = np.meshgrid(*([self.axis] * self.N), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """True at interior nodes that have a Dirichlet neighbour."""
        idx = np.indices(self.shape).reshape(self.N, -1)
        return np.any((idx == 0) | (idx == self.n_per_axis - 1), axis=0)

    def node_index(self, multi_index) -> int:
        return int(np.ravel_multi_index(tuple(multi_index), self.shape))

    def same_as(self, other: "GridDomain") -> bool:
        return (
            self.N == other.N
            and self.n_per_axis == other.n_per_axis
            and abs(self.R - other.R) <= 1e-12 * max(1.0, self.R)
        )

    def check_same(self, other: "GridDomain"):
        if not self.same_as(other):
            raise GridMismatch(f"grid {self} does not match {other}")

    def sup_radius(self) -> np.ndarray:
        """|x|_inf at every interior node."""
        return np.max(np.abs(self.points), axis=1)


@dataclass
class VectorField:
    """A grid function u: interior nodes -> R^M."""

    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape[0] != self.grid.n_int:
            raise GridMismatch(
                f"field has {values.shape[0]} nodes, grid has {self.grid.n_int}"
            )
        self.values = values

    @classmethod
    def zeros(cls, grid: GridDomain, M: int) -> "VectorField":
        return cls(grid, np.zeros((grid.n_int, M)))

    @classmethod
    def from_flat(cls, grid: GridDomain, vec: np.ndarray, M: int) -> "VectorField":
        return cls(grid, np.asarray(vec, dtype=float).reshape(grid.n_int, M))

    @classmethod
    def from_function(cls, grid: GridDomain, fn: Callable[[np.ndarray], np.ndarray]) -> "VectorField":
        """Samples fn(x) -> R^M at every interior node."""
        return cls(grid, np.array([np.atleast_1d(fn(x)) for x in grid.points], dtype=float))

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def component(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def as_grid(self) -> np.ndarray:
        """Block view of shape (n, ..., n, M)."""
        return self.values.reshape(self.grid.shape + (self.M,))

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.values.copy())

    def with_values(self, values: np.ndarray) -> "VectorField":
        return VectorField(self.grid, values)

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1))) if self.values.size else 0.0


def _padded(u: VectorField) -> np.ndarray:
    spatial = [(1, 1)] * u.grid.N + [(0, 0)]
    return np.pad(u.as_grid(), spatial)


def _interior(arr: np.ndarray, N: int, axis: int, start: int, stop: Optional[int]) -> np.ndarray:
    sl = [slice(1, -1)] * N + [slice(None)]
    sl[axis] = slice(start, stop)
    return arr[tuple(sl)]


def gradient(u: VectorField, one_sided_boundary: bool = False) -> np.ndarray:
    """
    Centered-difference gradient, shape (n_int, M, N); zero boundary values.

    With one_sided_boundary, nodes next to the boundary along an axis use the one-sided
    difference towards the boundary node instead: (u_1 - 0)/dx and (0 - u_n)/dx.
    """
    g, N = u.grid, u.grid.N
    padded = _padded(u)
    parts = []
    for i in range(N):
        forward = _interior(padded, N, i, 2, None)
        backward = _interior(padded, N, i, 0, -2)
        diff = (forward - backward) / (2.0 * g.dx)
        if one_sided_boundary and g.n_per_axis > 1:
            centre = _interior(padded, N, i, 1, -1)
            first = [slice(None)] * (N + 1)
            last = [slice(None)] * (N + 1)
            first[i] = slice(0, 1)
            last[i] = slice(-1, None)
            first, last = tuple(first), tuple(last)
            diff[first] = (centre[first] - backward[first]) / g.dx
            diff[last] = (forward[last] - centre[last]) / g.dx
        parts.append(diff.reshape(g.n_int, u.M))
    return np.stack(parts, axis=2)


def face_differences(u: VectorField):
    """Forward differences across every face along each axis (boundary faces included)."""
    g, N = u.grid, u.grid.N
    padded = _padded(u)
    out = []
    for i in range(N):
        sl = [slice(1, -1)] * N + [slice(None)]
        sl[i] = slice(None)
        along = padded[tuple(sl)]
        out.append(np.diff(along, axis=i) / g.dx)
    return out


def second_differences(u: VectorField):
    """All second difference quotients D_i D_j u as arrays of shape (n_int, M)."""
    g, N = u.grid, u.grid.N
    padded = _padded(u)
    centre = _interior(padded, N, 0, 1, -1)
    result = {}
    for i in range(N):
        plus = _interior(padded, N, i, 2, None)
        minus = _interior(padded, N, i, 0, -2)
        result[(i, i)] = ((plus - 2.0 * centre + minus) / g.dx ** 2).reshape(g.n_int, u.M)
    if N > 1:
        grad = gradient(u)
        for i in range(N):
            for j in range(N):
                if i != j:
                    result[(i, j)] = gradient(VectorField(g, grad[:, :, j]))[:, :, i]
    return result


def l2_norm(u: VectorField, weights: Optional[np.ndarray] = None) -> float:
    sq = np.sum(u.values ** 2, axis=1)
    if weights is not None:
        sq = sq * weights
    return float(np.sqrt(u.grid.cell_volume * np.sum(sq)))


def h1_seminorm(u: VectorField) -> float:
    """Face-based |u|_{1,2}; the same stencil as the operator's Gram matrix."""
    total = sum(float(np.sum(f ** 2)) for f in face_differences(u))
    return float(np.sqrt(u.grid.cell_volume * total))


def h1_norm(u: VectorField) -> float:
    return float(np.hypot(l2_norm(u), h1_seminorm(u)))


def h2_seminorm(u: VectorField) -> float:
    total = sum(float(np.sum(d ** 2)) for d in second_differences(u).values())
    return float(np.sqrt(u.grid.cell_volume * total))


def lp_norm(u: VectorField, p: float) -> float:
    mags = np.linalg.norm(u.values, axis=1)
    return float((u.grid.cell_volume * np.sum(mags ** p)) ** (1.0 / p))


def _offset(inner: GridDomain, outer: GridDomain) -> int:
    if inner.N != outer.N or abs(inner.dx - outer.dx) > 1e-12 * inner.dx:
        raise GridMismatch("nested grids must share dimension and spacing")
    shift = (outer.R - inner.R) / inner.dx
    if shift < -1e-9 or abs(shift - round(shift)) > 1e-9:
        raise GridMismatch("inner box is not aligned with the outer grid")
    return int(round(shift))


def extend_by_zero(u: VectorField, outer: GridDomain) -> VectorField:
    """Embeds a field into a larger box with the same spacing, zero outside."""
    k = _offset(u.grid, outer)
    big = np.zeros(outer.shape + (u.M,))
    sl = tuple(slice(k, k + u.grid.n_per_axis) for _ in range(outer.N))
    big[sl] = u.as_grid()
    return VectorField(outer, big.reshape(outer.n_int, u.M))


def restrict(u: VectorField, inner: GridDomain) -> VectorField:
    """Values of u at the nodes of a smaller aligned box."""
    k = _offset(inner, u.grid)
    sl = tuple(slice(k, k + inner.n_per_axis) for _ in range(inner.N))
    return VectorField(inner, u.as_grid()[sl].reshape(inner.n_int, u.M))
