"""Discrete Riesz representers of measurement functionals.

The representer ``phi`` of a functional ``nu`` is the discretely harmonic Q1
function whose boundary H^1 inner product reproduces ``nu`` on all discretely
harmonic functions. It is computed from the saddle-point system

    [ A   B^T ] [phi]   [nu]
    [ B   0   ] [pi ] = [ 0]

where ``A`` is the boundary H^1 Gram matrix embedded at the boundary nodes and
``B`` holds the stiffness rows of the interior nodes. Unknowns are ordered
``phi`` (all nodes, mesh order) followed by ``pi`` (interior nodes, mesh
order).

Because ``A`` vanishes on interior nodes and the interior stiffness block is
invertible, the system is block triangular after permuting
``(phi_I, phi_B, pi)``; the default solver uses that elimination with the
interior factorization shared by every functional on the mesh.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, SolverError
from .fem import (FeFunction, assemble_boundary_h1, assemble_stiffness, boundary_h1_norm,
                  h1_norm, harmonic_extension_many, interior_boundary_block,
                  interior_factorization)
from .functionals import DEFAULT_LOAD_ORDER, SensorGrid, load_vector
from .linalg import (DEFAULT_TOL, Factorization, accept_residual, as_csr, backward_error,
                     inf_norm, residual_extended, solve_symmetric_indefinite)
from .mesh import GridMesh

MAX_REFINEMENT_STEPS = 3
GALERKIN_ORACLE_MAX_LEVEL = 6


@dataclass(frozen=True, eq=False)
class RepresenterSolution:
    phi: FeFunction
    pi: np.ndarray | None
    harmonicity_residual: float
    solver_residual: float
    h1_norm: float = float("nan")
    x1_norm: float = float("nan")


@dataclass(frozen=True, eq=False)
class RepresenterSet:
    mesh: GridMesh
    sensors: SensorGrid
    solutions: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "solutions", tuple(self.solutions))
        if len(self.solutions) != self.sensors.m:
            raise ValueError("one representer per functional is required")

    def __len__(self):
        return len(self.solutions)

    def __getitem__(self, i) -> RepresenterSolution:
        return self.solutions[i]

    @property
    def phi_matrix(self) -> np.ndarray:
        """(m, num_nodes) array whose rows are the representer coefficients."""
        return np.vstack([s.phi.coefficients for s in self.solutions])

    @property
    def h1_norms(self) -> np.ndarray:
        return np.array([s.h1_norm for s in self.solutions])

    @property
    def x1_norms(self) -> np.ndarray:
        return np.array([s.x1_norm for s in self.solutions])

    @property
    def C0_hat(self) -> float:
        return float(np.max(self.h1_norms))


def embedded_boundary_gram(mesh: GridMesh) -> sp.csr_matrix:
    """Boundary H^1 Gram matrix scattered onto global node ids."""
    A = assemble_boundary_h1(mesh).tocoo()
    chain = mesh.boundary_chain
    return as_csr(sp.coo_matrix((A.data, (chain[A.row], chain[A.col])), shape=(mesh.num_nodes,) * 2))


def interior_rows(mesh: GridMesh) -> sp.csr_matrix:
    """``B``: stiffness rows of interior nodes, all columns."""
    return as_csr(assemble_stiffness(mesh)[mesh.interior_ids])


def assemble_saddle_system(mesh: GridMesh, functional, load_order: int = DEFAULT_LOAD_ORDER):
    """Explicit saddle matrix and right-hand side ``(nu, 0)``."""
    A = embedded_boundary_gram(mesh)
    B = interior_rows(mesh)
    S = sp.bmat([[A, B.T], [B, None]], format="csr")
    rhs = np.concatenate([load_vector(functional, mesh, load_order), np.zeros(mesh.num_interior)])
    return as_csr(S), rhs


class SaddleSolver:
    """Block elimination of the saddle system with factorizations reused per mesh."""

    def __init__(self, mesh: GridMesh, tol: float = DEFAULT_TOL):
        self.mesh = mesh
        self.tol = tol
        self.K = assemble_stiffness(mesh)
        self.K_IB = interior_boundary_block(mesh)
        self.interior = interior_factorization(mesh, tol)
        self.A_gamma = assemble_boundary_h1(mesh)
        self.boundary = Factorization(self.A_gamma, tol)
        self.norm = inf_norm(self.A_gamma) + inf_norm(self.K)

    @classmethod
    def for_mesh(cls, mesh: GridMesh, tol: float = DEFAULT_TOL) -> "SaddleSolver":
        key = ("saddle_solver", tol)
        if key not in mesh.cache:
            mesh.cache[key] = cls(mesh, tol)
        return mesh.cache[key]

    def residual_blocks(self, phi, pi, nu):
        """Residual ``(nu, 0) - S (phi, pi)`` in extended precision."""
        mesh = self.mesh
        I, chain = mesh.interior_ids, mesh.boundary_chain
        full_pi = np.zeros(mesh.num_nodes)
        full_pi[I] = pi
        top = residual_extended(self.K, full_pi, nu)
        top[chain] += residual_extended(self.A_gamma, phi[chain], np.zeros(len(chain)))
        bottom = residual_extended(self.K, phi, np.zeros(mesh.num_nodes))[I]
        return top, bottom

    def _eliminate(self, r_top, r_bottom):
        mesh = self.mesh
        I, chain = mesh.interior_ids, mesh.boundary_chain
        pi = self.interior.solve(r_top[I]) if np.any(r_top[I]) else np.zeros(len(I))
        phi = np.zeros(mesh.num_nodes)
        phi[chain] = self.boundary.solve(r_top[chain] - self.K_IB.T @ pi)
        rhs_I = r_bottom - self.K_IB @ phi[chain]
        if np.any(rhs_I):
            phi[I] = self.interior.solve(rhs_I)
        return phi, pi

    @staticmethod
    def _norm(top, bottom, nu):
        r = float(np.sqrt(np.sum(top ** 2) + np.sum(bottom ** 2)))
        nb = float(np.linalg.norm(nu))
        return r / nb if nb > 0 else r

    def residual(self, phi, pi, nu):
        return self._norm(*self.residual_blocks(phi, pi, nu), nu)

    def solve(self, nu):
        """Returns ``(phi, pi, relative_residual)``."""
        phi, pi = self._eliminate(nu, np.zeros(self.mesh.num_interior))
        top, bottom = self.residual_blocks(phi, pi, nu)
        res = self._norm(top, bottom, nu)
        for _ in range(MAX_REFINEMENT_STEPS):
            if res <= self.tol:
                break
            dphi, dpi = self._eliminate(top.astype(float), bottom.astype(float))
            trial = phi + dphi, pi + dpi
            t_top, t_bottom = self.residual_blocks(*trial, nu)
            t_res = self._norm(t_top, t_bottom, nu)
            if t_res < res:
                (phi, pi), top, bottom = trial, t_top, t_bottom
            stagnated = t_res > 0.5 * res
            res = min(res, t_res)
            if stagnated:
                break
        bw = backward_error(res * float(np.linalg.norm(nu)), self.norm,
                            np.concatenate([phi, pi]), nu)
        if not accept_residual(res, bw, self.tol):
            raise SolverError(f"saddle residual {res:.3e} exceeds {self.tol:.1e}", residual=res)
        return phi, pi, res


def harmonicity_residual(phi: FeFunction) -> float:
    """``||(K phi)_interior||_2 / max(1, ||phi||_2)``."""
    mesh = phi.mesh
    r = (assemble_stiffness(mesh) @ phi.coefficients)[mesh.interior_ids]
    return float(np.linalg.norm(r) / max(1.0, np.linalg.norm(phi.coefficients)))


def _energy(v: FeFunction) -> float:
    c = v.coefficients
    return float(np.sqrt(max(c @ (assemble_stiffness(v.mesh) @ c), 0.0)))


def _solution(mesh, phi_values, pi, solver_res) -> RepresenterSolution:
    phi = FeFunction(mesh, phi_values)
    return RepresenterSolution(
        phi=phi,
        pi=pi,
        harmonicity_residual=harmonicity_residual(phi),
        solver_residual=float(solver_res),
        h1_norm=h1_norm(phi),
        x1_norm=float(np.hypot(boundary_h1_norm(phi), _energy(phi))),
    )


def compute_representer(mesh: GridMesh, functional, tol: float = DEFAULT_TOL,
                        method: str = "block", load_order: int = DEFAULT_LOAD_ORDER) -> RepresenterSolution:
    """Representer of ``functional`` on ``mesh`` from the saddle-point system.

    ``method="block"`` uses the structured elimination; ``method="direct"``
    factorizes the assembled saddle matrix with pivoted sparse LU.
    """
    if method == "block":
        nu = load_vector(functional, mesh, load_order)
        phi, pi, res = SaddleSolver.for_mesh(mesh, tol).solve(nu)
    elif method == "direct":
        S, rhs = assemble_saddle_system(mesh, functional, load_order)
        x = solve_symmetric_indefinite(S, rhs, tol)
        phi, pi = x[:mesh.num_nodes], x[mesh.num_nodes:]
        res = np.linalg.norm(S @ x - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return _solution(mesh, phi, pi, res)


def compute_representer_set(mesh: GridMesh, sensors: SensorGrid, tol: float = DEFAULT_TOL,
                            threads: int = 1, load_order: int = DEFAULT_LOAD_ORDER) -> RepresenterSet:
    """Representers for every functional, in sensor order."""
    SaddleSolver.for_mesh(mesh, tol)  # build shared factorizations once

    def one(index):
        try:
            return compute_representer(mesh, sensors[index], tol, load_order=load_order)
        except SolverError as exc:
            raise SolverError(f"representer {index} failed: {exc}", residual=exc.residual, index=index) from exc

    indices = range(sensors.m)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solutions = list(pool.map(one, indices))
    else:
        solutions = [one(i) for i in indices]
    return RepresenterSet(mesh, sensors, tuple(solutions))


def galerkin_representer(mesh: GridMesh, functional, tol: float = DEFAULT_TOL,
                         load_order: int = DEFAULT_LOAD_ORDER) -> FeFunction:
    """Representer through the boundary Galerkin problem (reference path).

    Builds ``mu_h(g_k) = nu(E_h g_k)`` for every boundary hat ``g_k``, solves
    the boundary Gram system for the trace and extends it harmonically. It
    needs one extension per boundary node and is limited to small meshes.
    """
    if mesh.n > GALERKIN_ORACLE_MAX_LEVEL:
        raise ConfigurationError(f"Galerkin path limited to n <= {GALERKIN_ORACLE_MAX_LEVEL}")
    E = harmonic_extension_many(mesh, np.eye(mesh.num_boundary), tol)
    mu = E.T @ load_vector(functional, mesh, load_order)
    psi = Factorization(assemble_boundary_h1(mesh), tol).solve(mu)
    return FeFunction(mesh, E @ psi)
