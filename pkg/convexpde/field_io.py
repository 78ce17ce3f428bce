"""
convexpde Field I/O

Grid functions as CSV: header `x1,...,xN,u1,...,uM`, one interior node per line in
lexicographic node order, values written with 17 significant digits so that
load_field(dump_field(u)) reproduces u bit for bit.

Writes are atomic (temporary file + os.replace).
"""

import csv
import os
import tempfile
from typing import Optional

import numpy as np

from convexpde.errors import IOFailure, SchemaMismatch
from convexpde.grid import GridDomain, VectorField


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def dump_field(u: VectorField, path: str, grid: Optional[GridDomain] = None):
    if grid is not None:
        grid.check_same(u.grid)
    g = u.grid
    header = [f"x{i + 1}" for i in range(g.N)] + [f"u{k + 1}" for k in range(u.M)]
    try:
        with tempfile.NamedTemporaryFile("w", dir=os.path.dirname(os.path.abspath(path)),
                                         delete=False, newline="", encoding="utf-8") as tf:
            writer = csv.writer(tf)
            writer.writerow(header)
            for x, row in zip(g.points, u.values):
                writer.writerow([_fmt(v) for v in x] + [_fmt(v) for v in row])
            temp_path = tf.name
        os.replace(temp_path, path)
    except Exception as e:
        raise IOFailure(f"Atomic write of {path} failed: {e}") from e


def _infer_grid(coords: np.ndarray) -> GridDomain:
    rows, N = coords.shape
    n = int(round(rows ** (1.0 / N)))
    if n ** N != rows:
        raise SchemaMismatch(f"{rows} rows is not a full tensor grid in {N} dimensions")
    if n < 2:
        raise SchemaMismatch("a single-node field needs its grid passed explicitly")
    span = coords[-1, 0] - coords[0, 0]
    dx = span / (n - 1)
    return GridDomain(N, 0.5 * (n + 1) * dx, n)


def load_field(path: str, grid: Optional[GridDomain] = None) -> VectorField:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IOFailure(f"cannot read field file {path}: {e}") from e
    if not rows:
        raise SchemaMismatch(f"{path} is empty")
    header, body = rows[0], rows[1:]
    N = sum(1 for h in header if h.startswith("x"))
    M = len(header) - N
    expected = [f"x{i + 1}" for i in range(N)] + [f"u{k + 1}" for k in range(M)]
    if N == 0 or M == 0 or header != expected:
        raise SchemaMismatch(f"unexpected header {header}")
    for lineno, row in enumerate(body, start=2):
        if len(row) != N + M:
            raise SchemaMismatch(f"line {lineno}: expected {N + M} columns, got {len(row)}")
    try:
        table = np.array([[float(v) for v in row] for row in body], dtype=float).reshape(-1, N + M)
    except ValueError as e:
        raise SchemaMismatch(f"non-numeric entry in {path}: {e}") from e

    coords, values = table[:, :N], table[:, N:]
    grid = grid if grid is not None else _infer_grid(coords)
    if grid.N != N or grid.n_int != coords.shape[0]:
        raise SchemaMismatch(f"file holds {coords.shape[0]} nodes in {N}-D, grid expects {grid.n_int} in {grid.N}-D")
    if not np.allclose(coords, grid.points, rtol=0.0, atol=1e-12 * max(1.0, grid.R)):
        raise SchemaMismatch("node coordinates do not match the grid")
    return VectorField(grid, values)
