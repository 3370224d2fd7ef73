"""Uniform Q1 meshes of the unit square.

Nodes sit on the lattice ``(i*h, j*h)`` with ``h = 2**-n`` and are numbered
row-major, ``id = j * (2**n + 1) + i`` (``i`` runs along x, ``j`` along y).
Cell ``(ci, cj)`` is ``[ci*h, (ci+1)*h] x [cj*h, (cj+1)*h]``; its corners are
listed in the local order SW, SE, NE, NW.

The boundary chain starts at the origin and runs counterclockwise:
bottom edge, right edge, top edge, left edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

MAX_LEVEL = 12


@dataclass(frozen=True, eq=False)
class GridMesh:
    n: int
    boundary_chain: np.ndarray = field(repr=False)
    interior_ids: np.ndarray = field(repr=False)
    # assembled operators and factorizations, filled lazily by other modules
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def h(self) -> float:
        return 2.0 ** -self.n

    @property
    def cells_per_side(self) -> int:
        return 2 ** self.n

    @property
    def num_nodes_per_side(self) -> int:
        return 2 ** self.n + 1

    @property
    def num_nodes(self) -> int:
        return self.num_nodes_per_side ** 2

    @property
    def num_cells(self) -> int:
        return self.cells_per_side ** 2

    @property
    def num_boundary(self) -> int:
        return len(self.boundary_chain)

    @property
    def num_interior(self) -> int:
        return len(self.interior_ids)

    def node_id(self, i, j):
        return np.asarray(j) * self.num_nodes_per_side + np.asarray(i)

    @property
    def coordinates(self) -> np.ndarray:
        """(num_nodes, 2) array of node coordinates."""
        k = np.arange(self.num_nodes_per_side) * self.h
        X, Y = np.meshgrid(k, k)
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def cell_nodes(self) -> np.ndarray:
        """(num_cells, 4) node ids per cell in SW, SE, NE, NW order.

        Cells are numbered row-major like the nodes: ``cj * 2**n + ci``.
        """
        c = self.cells_per_side
        ci, cj = np.meshgrid(np.arange(c), np.arange(c))
        sw = self.node_id(ci.ravel(), cj.ravel())
        s = self.num_nodes_per_side
        return np.column_stack([sw, sw + 1, sw + 1 + s, sw + s])

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[self.boundary_chain] = True
        return mask


def _boundary_chain(n: int) -> np.ndarray:
    c = 2 ** n
    s = c + 1
    k = np.arange(c)
    bottom = k                      # (k, 0)
    right = c + k * s               # (c, k)
    top = c * s + (c - k)           # (c - k, c)
    left = (c - k) * s              # (0, c - k)
    return np.concatenate([bottom, right, top, left])


def build_mesh(n: int) -> GridMesh:
    """Uniform mesh of (0,1)^2 with ``4**n`` square cells of side ``2**-n``."""
    if isinstance(n, bool) or int(n) != n or not 1 <= n <= MAX_LEVEL:
        raise ConfigurationError(f"refinement level must be an integer in [1, {MAX_LEVEL}], got {n!r}")
    n = int(n)
    chain = _boundary_chain(n)
    mask = np.zeros((2 ** n + 1) ** 2, dtype=bool)
    mask[chain] = True
    interior = np.flatnonzero(~mask)
    chain.setflags(write=False)
    interior.setflags(write=False)
    return GridMesh(n=n, boundary_chain=chain, interior_ids=interior)


def locate_cell(mesh: GridMesh, p) -> tuple[tuple[int, int], tuple[float, float]]:
    """Return ``((ci, cj), (xi, eta))`` for a point of the closed square.

    A point on an interior grid line belongs to the cell on its upper/right
    side, i.e. the cell whose lower-left corner it shares. Points on the top or
    right side of the square belong to the last cell row/column, with local
    coordinate 1.
    """
    cells, local = locate_cells(mesh, np.atleast_2d(np.asarray(p, dtype=float)))
    return (int(cells[0, 0]), int(cells[0, 1])), (float(local[0, 0]), float(local[0, 1]))


def locate_cells(mesh: GridMesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`locate_cell` for an (k, 2) array of points."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("points must have shape (k, 2)")
    if not np.all(np.isfinite(points)) or np.any(points < 0.0) or np.any(points > 1.0):
        raise DomainError("point outside the closed unit square [0,1]^2")
    c = mesh.cells_per_side
    scaled = points * c
    cells = np.minimum(np.floor(scaled).astype(np.int64), c - 1)
    local = scaled - cells
    return cells, local
