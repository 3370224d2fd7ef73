"""Sparse and dense solvers with residual contracts.

Sparse matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted
column indices, no duplicates). Every solver checks the relative residual it
promises and raises :class:`SolverError` when it is missed.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import RecoveryError, SolverError

DEFAULT_TOL = 1e-10
MAX_REFINEMENT_STEPS = 3
# normwise backward error accepted once refinement can no longer reduce ||r||
ROUNDOFF_BACKWARD_ERROR = 1e3 * np.finfo(float).eps


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix has non-finite entries")
    return A


def backward_error(res_norm, A_norm, x, b) -> float:
    """Normwise backward error ``||r|| / (||A|| ||x|| + ||b||)``."""
    denom = A_norm * float(np.linalg.norm(x)) + float(np.linalg.norm(b))
    return res_norm / denom if denom > 0 else res_norm


def inf_norm(A: sp.csr_matrix) -> float:
    return float(abs(A).sum(axis=1).max()) if A.nnz else 0.0


def accept_residual(rel, bw, tol) -> bool:
    """Residual target met, or the solve sits at the floating-point floor."""
    return rel <= tol or bw <= ROUNDOFF_BACKWARD_ERROR


def _check_tol(tol):
    if not 0.0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")


def residual_extended(A: sp.csr_matrix, x, b) -> np.ndarray:
    """``b - A x`` accumulated in extended precision (``np.longdouble``)."""
    xl = np.asarray(x, dtype=np.longdouble)
    prod = A.data.astype(np.longdouble) * xl[A.indices]
    starts = A.indptr[:-1]
    nonempty = A.indptr[1:] > starts
    Ax = np.zeros(A.shape[0], dtype=np.longdouble)
    if prod.size:
        Ax[nonempty] = np.add.reduceat(prod, starts[nonempty])
    return np.asarray(b, dtype=np.longdouble) - Ax


def _norm(r) -> float:
    return float(np.sqrt(np.sum(np.asarray(r, dtype=np.longdouble) ** 2)))


class Factorization:
    """Sparse LU factorization reused across right-hand sides.

    ``solve`` applies a few steps of iterative refinement, with residuals
    accumulated in extended precision, if the first back-substitution misses
    ``tol``.
    """

    def __init__(self, A, tol=DEFAULT_TOL):
        _check_tol(tol)
        self.A = as_csr(A)
        self.tol = tol
        self.norm = inf_norm(self.A)
        try:
            self._lu = spla.splu(self.A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:  # exactly singular
            raise SolverError(f"factorization failed: {exc}") from exc

    @property
    def shape(self):
        return self.A.shape

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        nb = float(np.linalg.norm(b))
        x = self._lu.solve(b)
        r = residual_extended(self.A, x, b)
        rn = _norm(r)
        for _ in range(MAX_REFINEMENT_STEPS):
            if rn <= self.tol * nb:
                break
            x_new = x + self._lu.solve(r.astype(float))
            r_new = residual_extended(self.A, x_new, b)
            rn_new = _norm(r_new)
            if rn_new > 0.5 * rn:  # stagnated at round-off
                if rn_new < rn:
                    x, r, rn = x_new, r_new, rn_new
                break
            x, r, rn = x_new, r_new, rn_new
        rel = rn / nb if nb > 0 else rn
        if not np.all(np.isfinite(x)) or not accept_residual(rel, backward_error(rn, self.norm, x, b), self.tol):
            raise SolverError(f"relative residual {rel:.3e} exceeds {self.tol:.1e}", residual=rel)
        return x


def solve_spd(A, b, tol=DEFAULT_TOL):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Guarantees ``||Ax - b|| <= tol * ||b||`` unless that lies below what
    double precision can represent, in which case the normwise backward error
    is at round-off level (see :func:`accept_residual`).
    """
    return Factorization(A, tol).solve(b)


def solve_symmetric_indefinite(A, b, tol=DEFAULT_TOL):
    """Solve ``A x = b`` for symmetric, possibly indefinite ``A``.

    Uses pivoted sparse LU, which handles zero diagonal blocks of saddle-point
    systems.
    """
    return Factorization(A, tol).solve(b)


def solve_dense(G, w, return_residual=False):
    """Partial-pivoting LU solve of a small dense system.

    Raises :class:`RecoveryError` when a pivot vanishes to working precision.
    With ``return_residual`` the pair ``(x, ||Gx - w||_inf)`` is returned.
    """
    G = np.asarray(G, dtype=float)
    w = np.asarray(w, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or w.shape != (G.shape[0],):
        raise ValueError("G must be square and w must match its size")
    lu, piv = _lu_factor(G)
    x = sla.lu_solve((lu, piv), w)
    if return_residual:
        return x, float(np.max(np.abs(G @ x - w), initial=0.0))
    return x


def _lu_factor(G):
    if not np.all(np.isfinite(G)):
        raise RecoveryError("matrix has non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(G, check_finite=False)
    pivots = np.abs(np.diag(lu))
    scale = np.max(np.abs(G), initial=0.0)
    if scale == 0.0 or np.min(pivots) <= np.finfo(float).eps * scale * 1e-3:
        raise RecoveryError(
            f"singular matrix: smallest pivot {np.min(pivots):.3e} relative to max entry {scale:.3e}"
        )
    return lu, piv


class DenseLU:
    """Cached LU factors for repeated solves with the same small matrix."""

    def __init__(self, G):
        self.G = np.asarray(G, dtype=float)
        self._factors = _lu_factor(self.G)

    def solve(self, w):
        return sla.lu_solve(self._factors, np.asarray(w, dtype=float), check_finite=False)


def one_norm_inverse(G) -> float:
    """Exact ``||G^{-1}||_1`` (maximum absolute column sum) via the explicit inverse."""
    G = np.asarray(G, dtype=float)
    lu, piv = _lu_factor(G)
    inv = sla.lu_solve((lu, piv), np.eye(G.shape[0]))
    return float(np.max(np.sum(np.abs(inv), axis=0)))
