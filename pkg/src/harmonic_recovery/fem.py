"""Q1 finite elements on :class:`GridMesh`: assembly, Dirichlet solves,
discrete harmonic extension, point evaluation and error norms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import DEFAULT_TOL, Factorization, as_csr
from .mesh import GridMesh, locate_cells

# Local corner order SW, SE, NE, NW. Both matrices are for the unit square;
# the Q1 stiffness is h-independent in 2D and the mass scales with h^2.
Q1_STIFFNESS = np.array([
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
]) / 6.0
Q1_MASS = np.array([
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
]) / 36.0

DEFAULT_QUAD_ORDER = 3


def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def shape_values(xi, eta) -> np.ndarray:
    """Q1 shape functions at local coordinates, shape (4, ...)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta])


def shape_gradients(xi, eta) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the Q1 shape functions with respect to (xi, eta)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    dxi = np.stack([-(1 - eta), 1 - eta, eta, -eta])
    deta = np.stack([-(1 - xi), -xi, xi, 1 - xi])
    return dxi, deta


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Continuous piecewise-bilinear field given by its nodal values."""

    mesh: GridMesh
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.mesh.num_nodes,):
            raise ValueError(f"expected {self.mesh.num_nodes} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    def __call__(self, p):
        return evaluate(self, p)

    @property
    def interior(self) -> np.ndarray:
        return self.coefficients[self.mesh.interior_ids]

    def trace(self) -> "BoundaryFunction":
        return BoundaryFunction(self.mesh, self.coefficients[self.mesh.boundary_chain])


@dataclass(frozen=True, eq=False)
class BoundaryFunction:
    """Continuous piecewise-linear function on the boundary chain."""

    mesh: GridMesh
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.mesh.num_boundary,):
            raise ValueError(f"expected {self.mesh.num_boundary} boundary values, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coefficients", c)


@dataclass(frozen=True)
class ExactField:
    """Closed-form scalar field with its gradient, both vectorized in (x, y)."""

    value: Callable
    gradient: Callable

    def __call__(self, x, y):
        return self.value(x, y)


def exp_cos_field() -> ExactField:
    """The harmonic field ``exp(x) cos(y)``."""
    return ExactField(
        value=lambda x, y: np.exp(x) * np.cos(y),
        gradient=lambda x, y: (np.exp(x) * np.cos(y), -np.exp(x) * np.sin(y)),
    )


def constant_field(c: float) -> ExactField:
    return ExactField(
        value=lambda x, y: np.full(np.broadcast(x, y).shape, float(c)),
        gradient=lambda x, y: (np.zeros(np.broadcast(x, y).shape),) * 2,
    )


def zero_field() -> ExactField:
    return constant_field(0.0)


# -- assembly ---------------------------------------------------------------

def _assemble_cells(mesh: GridMesh, local: np.ndarray) -> sp.csr_matrix:
    cn = mesh.cell_nodes
    rows = np.repeat(cn, 4, axis=1).ravel()
    cols = np.tile(cn, (1, 4)).ravel()
    vals = np.tile(local.ravel(), mesh.num_cells)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(mesh.num_nodes,) * 2)
    return as_csr(A)


def _cached(mesh: GridMesh, key, build):
    try:
        return mesh.cache[key]
    except KeyError:
        value = mesh.cache[key] = build()
        return value


def assemble_stiffness(mesh: GridMesh) -> sp.csr_matrix:
    """Global matrix of ``int grad N_i . grad N_j`` over all nodes."""
    return _cached(mesh, "stiffness", lambda: _assemble_cells(mesh, Q1_STIFFNESS))


def assemble_mass(mesh: GridMesh) -> sp.csr_matrix:
    """Global matrix of ``int N_i N_j``."""
    return _cached(mesh, "mass", lambda: _assemble_cells(mesh, Q1_MASS * mesh.h ** 2))


def assemble_boundary_parts(mesh: GridMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """1D mass and tangential stiffness along the closed boundary chain.

    Indices refer to positions in ``mesh.boundary_chain``. The chain is treated
    as one periodic polyline, so corners are ordinary nodes.
    """
    def build():
        L = mesh.num_boundary
        h = mesh.h
        a = np.arange(L)
        b = (a + 1) % L
        rows = np.concatenate([a, a, b, b])
        cols = np.concatenate([a, b, a, b])
        mass = np.concatenate([np.full(L, 2.0), np.ones(L), np.ones(L), np.full(L, 2.0)]) * h / 6.0
        stiff = np.concatenate([np.ones(L), -np.ones(L), -np.ones(L), np.ones(L)]) / h
        M = as_csr(sp.coo_matrix((mass, (rows, cols)), shape=(L, L)))
        S = as_csr(sp.coo_matrix((stiff, (rows, cols)), shape=(L, L)))
        return M, S
    return _cached(mesh, "boundary_parts", build)


def assemble_boundary_h1(mesh: GridMesh) -> sp.csr_matrix:
    """Gram matrix of the H^1(boundary) inner product on boundary hats.

    ``g^T A g = ||g||^2_{L2} + ||d g / ds||^2_{L2}`` for the piecewise-linear
    trace ``g``.
    """
    def build():
        M, S = assemble_boundary_parts(mesh)
        return as_csr(M + S)
    return _cached(mesh, "boundary_h1", build)


def interior_factorization(mesh: GridMesh, tol: float = DEFAULT_TOL) -> Factorization:
    """Factorized interior block of the stiffness matrix (shared per mesh)."""
    def build():
        K = assemble_stiffness(mesh)
        I = mesh.interior_ids
        return Factorization(K[I][:, I], tol)
    return _cached(mesh, ("interior_lu", tol), build)


def interior_boundary_block(mesh: GridMesh) -> sp.csr_matrix:
    """Stiffness rows at interior nodes, columns at boundary chain positions."""
    def build():
        K = assemble_stiffness(mesh)
        return as_csr(K[mesh.interior_ids][:, mesh.boundary_chain])
    return _cached(mesh, "K_IB", build)


# -- quadrature on cells ----------------------------------------------------

def _cell_quadrature(mesh: GridMesh, order: int):
    """Physical points (cells, q*q) and weights (q*q,) of a tensor Gauss rule."""
    t, w = gauss_rule(order)
    XI, ETA = np.meshgrid(t, t, indexing="ij")
    xi, eta = XI.ravel(), ETA.ravel()
    weights = np.outer(w, w).ravel() * mesh.h ** 2
    c = mesh.cells_per_side
    ci, cj = np.meshgrid(np.arange(c), np.arange(c))
    x = (ci.ravel()[:, None] + xi[None, :]) * mesh.h
    y = (cj.ravel()[:, None] + eta[None, :]) * mesh.h
    return x, y, xi, eta, weights


def source_load_vector(mesh: GridMesh, f, order: int = DEFAULT_QUAD_ORDER) -> np.ndarray:
    """``int f N_i`` for a callable or constant source ``f``."""
    if f is None:
        return np.zeros(mesh.num_nodes)
    x, y, xi, eta, weights = _cell_quadrature(mesh, order)
    fv = f(x, y) if callable(f) else np.full(x.shape, float(f))
    N = shape_values(xi, eta)                       # (4, q*q)
    local = (fv * weights) @ N.T                    # (cells, 4)
    return np.bincount(mesh.cell_nodes.ravel(), local.ravel(), minlength=mesh.num_nodes)


# -- solves -----------------------------------------------------------------

def nodal_trace(mesh: GridMesh, field) -> BoundaryFunction:
    """Boundary function with the values of ``field`` at the chain nodes."""
    xy = mesh.coordinates[mesh.boundary_chain]
    return BoundaryFunction(mesh, np.broadcast_to(field(xy[:, 0], xy[:, 1]), (len(xy),)))


def interpolate(mesh: GridMesh, field) -> FeFunction:
    """Nodal interpolant of a vectorized callable ``field(x, y)``."""
    xy = mesh.coordinates
    return FeFunction(mesh, np.broadcast_to(field(xy[:, 0], xy[:, 1]), (len(xy),)).copy())


def solve_dirichlet_poisson(mesh: GridMesh, f=None, g: BoundaryFunction | None = None,
                            tol: float = DEFAULT_TOL, quad_order: int = DEFAULT_QUAD_ORDER) -> FeFunction:
    """Galerkin solution of ``-Laplace u = f`` with ``u = g`` at boundary nodes.

    Boundary rows are eliminated, so the trace equals ``g`` exactly. ``f`` may
    be ``None`` (zero), a constant, or a vectorized callable.
    """
    u = np.zeros(mesh.num_nodes)
    if g is not None:
        if g.mesh is not mesh:
            raise ValueError("boundary data lives on a different mesh")
        u[mesh.boundary_chain] = g.coefficients
    rhs = source_load_vector(mesh, f, quad_order)[mesh.interior_ids]
    if g is not None:
        rhs = rhs - interior_boundary_block(mesh) @ g.coefficients
    if np.any(rhs):
        u[mesh.interior_ids] = interior_factorization(mesh, tol).solve(rhs)
    return FeFunction(mesh, u)


def harmonic_extension(mesh: GridMesh, g: BoundaryFunction, tol: float = DEFAULT_TOL) -> FeFunction:
    """Discrete harmonic extension: minimal Dirichlet energy with trace ``g``."""
    return solve_dirichlet_poisson(mesh, None, g, tol)


def harmonic_extension_many(mesh: GridMesh, G: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Discrete harmonic extensions of the columns of ``G`` (boundary, k).

    Returns nodal values with shape (num_nodes, k).
    """
    G = np.asarray(G, dtype=float).reshape(mesh.num_boundary, -1)
    U = np.zeros((mesh.num_nodes, G.shape[1]))
    U[mesh.boundary_chain] = G
    rhs = -(interior_boundary_block(mesh) @ G)
    solver = interior_factorization(mesh, tol)
    for k in range(G.shape[1]):
        if np.any(rhs[:, k]):
            U[mesh.interior_ids, k] = solver.solve(rhs[:, k])
    return U


# -- evaluation and norms ---------------------------------------------------

def point_weights(mesh: GridMesh, points) -> tuple[np.ndarray, np.ndarray]:
    """Node ids (k, 4) and bilinear weights (k, 4) for points of the square."""
    cells, local = locate_cells(mesh, np.atleast_2d(np.asarray(points, dtype=float)))
    sw = mesh.node_id(cells[:, 0], cells[:, 1])
    s = mesh.num_nodes_per_side
    ids = np.column_stack([sw, sw + 1, sw + 1 + s, sw + s])
    return ids, shape_values(local[:, 0], local[:, 1]).T


def evaluate(v: FeFunction, p) -> float | np.ndarray:
    """Bilinear interpolation of ``v`` at a point or an (k, 2) array of points."""
    p = np.asarray(p, dtype=float)
    ids, weights = point_weights(v.mesh, p)
    values = np.sum(v.coefficients[ids] * weights, axis=1)
    return float(values[0]) if p.ndim == 1 else values


def prolongate(v: FeFunction, fine: GridMesh) -> FeFunction:
    """Exact representation of ``v`` on a nested finer mesh."""
    if fine.n < v.mesh.n:
        raise ValueError("target mesh must be at least as fine")
    return FeFunction(fine, evaluate(v, fine.coordinates))


def _error_integrals(v: FeFunction, ref: ExactField | None, order: int) -> tuple[float, float]:
    mesh = v.mesh
    x, y, xi, eta, weights = _cell_quadrature(mesh, order)
    coeff = v.coefficients[mesh.cell_nodes]           # (cells, 4)
    N = shape_values(xi, eta)
    dxi, deta = shape_gradients(xi, eta)
    val = coeff @ N
    gx = coeff @ dxi / mesh.h
    gy = coeff @ deta / mesh.h
    if ref is not None:
        val = val - ref.value(x, y)
        rgx, rgy = ref.gradient(x, y)
        gx = gx - rgx
        gy = gy - rgy
    l2 = float(np.sum((val ** 2) @ weights))
    semi = float(np.sum((gx ** 2 + gy ** 2) @ weights))
    return l2, semi


def h1_error(v: FeFunction, ref: ExactField | None = None, order: int = DEFAULT_QUAD_ORDER) -> float:
    """``||v - ref||_{H^1}`` by tensor Gauss quadrature on every cell."""
    l2, semi = _error_integrals(v, ref, order)
    return float(np.sqrt(l2 + semi))


def l2_error(v: FeFunction, ref: ExactField | None = None, order: int = DEFAULT_QUAD_ORDER) -> float:
    return float(np.sqrt(_error_integrals(v, ref, order)[0]))


def linf_error_on_nodes(v: FeFunction, ref: ExactField | None = None) -> float:
    """Maximum nodal deviation ``max_i |v_i - ref(x_i)|``."""
    diff = v.coefficients
    if ref is not None:
        xy = v.mesh.coordinates
        diff = diff - ref.value(xy[:, 0], xy[:, 1])
    return float(np.max(np.abs(diff)))


def h1_norm(v: FeFunction) -> float:
    """Exact H^1 norm of a finite element function via the mass and stiffness matrices."""
    c = v.coefficients
    K = assemble_stiffness(v.mesh)
    M = assemble_mass(v.mesh)
    return float(np.sqrt(max(c @ (K @ c) + c @ (M @ c), 0.0)))


def boundary_h1_norm(v: FeFunction) -> float:
    """``||v_Gamma||_{H^1(Gamma)}`` of the trace."""
    g = v.coefficients[v.mesh.boundary_chain]
    return float(np.sqrt(max(g @ (assemble_boundary_h1(v.mesh) @ g), 0.0)))


__all__ = [
    "BoundaryFunction", "ExactField", "FeFunction", "Q1_MASS", "Q1_STIFFNESS",
    "assemble_boundary_h1", "assemble_boundary_parts", "assemble_mass", "assemble_stiffness",
    "boundary_h1_norm", "constant_field", "evaluate", "exp_cos_field", "gauss_rule",
    "h1_error", "h1_norm", "harmonic_extension", "harmonic_extension_many", "interpolate",
    "l2_error", "linf_error_on_nodes", "nodal_trace", "point_weights", "prolongate",
    "shape_gradients", "shape_values", "solve_dirichlet_poisson", "source_load_vector", "zero_field",
]
