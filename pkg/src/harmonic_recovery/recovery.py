"""Offline/online recovery of a Poisson solution from linear measurements.

Offline (independent of the data): the Dirichlet solution ``u0_hat`` with
zero boundary values, the representers ``phi_j`` and the Gramian
``G[i, j] = lambda_j(phi_i)``. Online: ``w_hat = w - lambda(u0_hat)``, one
m x m solve for the coefficients, and ``u_hat = u0_hat + sum_j a_j phi_j``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, IllConditionedGramianWarning, RecoveryError
from .fem import (ExactField, FeFunction, assemble_mass, assemble_stiffness, h1_error,
                  interpolate, solve_dirichlet_poisson, source_load_vector)
from .functionals import (DEFAULT_EXACT_LEVEL, DEFAULT_EXACT_ORDER, DEFAULT_LOAD_ORDER,
                          SensorGrid, apply_to_exact, load_vector)
from .linalg import DEFAULT_TOL, DenseLU, Factorization, one_norm_inverse
from .mesh import GridMesh, build_mesh
from .representers import RepresenterSet, compute_representer_set

log = logging.getLogger(__name__)

ILL_CONDITIONED = 1e12


@dataclass(frozen=True)
class RecoveryDiagnostics:
    M_hat: float                  # ||G^{-1}||_1, inf when G is singular
    gramian_condition: float      # 2-norm condition number
    gramian_asymmetry: float      # ||G - G^T||_inf
    C0_hat: float                 # max_j ||phi_j||_{H^1}
    Lambda_hat: float             # max_j norm of lambda_j on V_h with the H^1 norm
    max_solver_residual: float
    max_harmonicity_residual: float
    u0_interior_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class OfflineBundle:
    mesh: GridMesh
    sensors: SensorGrid
    u0_hat: FeFunction
    representers: RepresenterSet
    gramian: np.ndarray
    lambda_u0: np.ndarray
    diagnostics: RecoveryDiagnostics
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.sensors.m

    @property
    def phi_matrix(self) -> np.ndarray:
        if "phi" not in self._cache:
            self._cache["phi"] = self.representers.phi_matrix
        return self._cache["phi"]

    def solve_coefficients(self, w_hat) -> np.ndarray:
        """Coefficients ``a`` with ``lambda_i(sum_j a_j phi_j) = w_hat_i``.

        That system has matrix ``G^T`` under the ``G[i, j] = lambda_j(phi_i)``
        convention; ``G`` is symmetric up to solver round-off.
        """
        if "lu" not in self._cache:
            try:
                self._cache["lu"] = DenseLU(self.gramian.T)
            except RecoveryError as exc:
                raise RecoveryError(f"Gramian is numerically singular: {exc}", self.diagnostics) from exc
        return self._cache["lu"].solve(w_hat)


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    u_hat: FeFunction
    a_hat: np.ndarray
    w_prime_hat: np.ndarray
    data_residual: float
    noise_amplification_bound: float | None = None
    h1_error: float | None = None


def load_matrix(mesh: GridMesh, sensors: SensorGrid, order: int = DEFAULT_LOAD_ORDER) -> np.ndarray:
    """(num_nodes, m) array whose columns are the load vectors."""
    return np.column_stack([load_vector(f, mesh, order) for f in sensors])


def _h1_dual_norms(mesh: GridMesh, L: np.ndarray, tol: float) -> np.ndarray:
    key = ("h1_gram_lu", tol)
    if key not in mesh.cache:
        mesh.cache[key] = Factorization(assemble_stiffness(mesh) + assemble_mass(mesh), tol)
    solver = mesh.cache[key]
    return np.array([math.sqrt(max(L[:, j] @ solver.solve(L[:, j]), 0.0)) for j in range(L.shape[1])])


def _gramian_diagnostics(G):
    try:
        M_hat = one_norm_inverse(G)
    except RecoveryError:
        M_hat = math.inf
    try:
        s = np.linalg.svd(G, compute_uv=False)
        cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    except np.linalg.LinAlgError:
        cond = math.inf
    asym = float(np.max(np.sum(np.abs(G - G.T), axis=1)))
    return M_hat, cond, asym


def offline(mesh: GridMesh, f, sensors: SensorGrid, tol: float = DEFAULT_TOL, threads: int = 1,
            load_order: int = DEFAULT_LOAD_ORDER) -> OfflineBundle:
    """Offline phase: ``u0_hat``, representers and Gramian for a fixed sensor set.

    ``f`` is the source term (``None`` for zero, a constant, or a vectorized
    callable).
    """
    if f is None:
        u0 = FeFunction(mesh, np.zeros(mesh.num_nodes))
        u0_res = 0.0
    else:
        u0 = solve_dirichlet_poisson(mesh, f, None, tol)
        b = source_load_vector(mesh, f)[mesh.interior_ids]
        r = (assemble_stiffness(mesh) @ u0.coefficients)[mesh.interior_ids] - b
        u0_res = float(np.linalg.norm(r) / max(np.linalg.norm(b), np.finfo(float).tiny))

    reps = compute_representer_set(mesh, sensors, tol, threads=threads, load_order=load_order)
    L = load_matrix(mesh, sensors, load_order)
    G = reps.phi_matrix @ L
    M_hat, cond, asym = _gramian_diagnostics(G)
    diagnostics = RecoveryDiagnostics(
        M_hat=M_hat,
        gramian_condition=cond,
        gramian_asymmetry=asym,
        C0_hat=reps.C0_hat,
        Lambda_hat=float(np.max(_h1_dual_norms(mesh, L, tol))),
        max_solver_residual=float(max(s.solver_residual for s in reps.solutions)),
        max_harmonicity_residual=float(max(s.harmonicity_residual for s in reps.solutions)),
        u0_interior_residual=u0_res,
    )
    if cond > ILL_CONDITIONED:
        warnings.warn(f"Gramian condition number {cond:.2e} (m={sensors.m}, n={mesh.n})",
                      IllConditionedGramianWarning, stacklevel=2)
    return OfflineBundle(mesh, sensors, u0, reps, G, L.T @ u0.coefficients, diagnostics)


def noise_amplification_bound(diagnostics: RecoveryDiagnostics, m: int, kappa: float,
                              eps2: float = 0.0) -> float:
    """``(M + delta) m (C0 + eps2) kappa`` with the computable surrogates
    ``M <= 2 M_hat`` (when eps2 > 0) and ``delta <= 2 M_hat^2 m Lambda eps2``."""
    M_hat, Lam, C0 = diagnostics.M_hat, diagnostics.Lambda_hat, diagnostics.C0_hat
    if eps2 > 0:
        if eps2 >= 1.0 / (2 * m * M_hat * Lam):
            raise ValueError("eps2 too large for the computable bounds (needs eps2 < 1/(2 m M_hat Lambda))")
        M, delta = 2 * M_hat, 2 * M_hat ** 2 * m * Lam * eps2
    else:
        M, delta = M_hat, 0.0
    return (M + delta) * m * (C0 + eps2) * kappa


def computable_error_budget(m: int, M_hat: float, Lambda: float, Lambda_s: float, C0: float,
                            eps1: float, eps2: float) -> float:
    """Left side of the a-posteriori tolerance condition built only from
    computable quantities; the recovery is within ``R(K_w) + budget``.

    Requires ``eps2 < 1 / (2 m M_hat Lambda)``.
    """
    if eps2 >= 1.0 / (2 * m * M_hat * Lambda):
        raise ValueError("eps2 must be below 1 / (2 m M_hat Lambda)")
    delta_hat = 2 * M_hat ** 2 * m * Lambda * eps2
    return (eps1 + 2 * m * M_hat * Lambda_s * eps2
            + (C0 + eps2) * (2 * m * M_hat * Lambda * eps1 + m * (Lambda_s + Lambda * eps1) * delta_hat))


def online(bundle: OfflineBundle, w, noise_bound: float | None = None, eps2: float = 0.0) -> RecoveryResult:
    """Online phase: solve the m x m system for data ``w`` and assemble ``u_hat``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (bundle.m,):
        raise ConfigurationError(f"data vector must have length {bundle.m}, got shape {w.shape}")
    w_hat = w - bundle.lambda_u0
    a = bundle.solve_coefficients(w_hat)
    if not np.all(np.isfinite(a)):
        raise RecoveryError("non-finite coefficients", bundle.diagnostics)
    u = bundle.u0_hat.coefficients + a @ bundle.phi_matrix
    residual = float(np.max(np.abs(bundle.gramian.T @ a - w_hat), initial=0.0))
    bound = None
    if noise_bound is not None:
        bound = noise_amplification_bound(bundle.diagnostics, bundle.m, noise_bound, eps2)
    return RecoveryResult(FeFunction(bundle.mesh, u), a, w_hat, residual, bound)


def measure_exact(sensors: SensorGrid, u_exact: ExactField, data_source: str = "exact",
                  fine_level: int = 9, exact_order: int = DEFAULT_EXACT_ORDER,
                  exact_level: int = DEFAULT_EXACT_LEVEL) -> np.ndarray:
    """Data vector ``lambda(u_exact)``.

    ``data_source="exact"`` applies each functional to the closed form;
    ``"fine_mesh"`` applies it to the nodal interpolant on mesh ``fine_level``.
    """
    if data_source == "exact":
        return np.array([apply_to_exact(f, u_exact, exact_order, exact_level) for f in sensors])
    if data_source == "fine_mesh":
        fine = build_mesh(fine_level)
        v = interpolate(fine, u_exact.value)
        return load_matrix(fine, sensors).T @ v.coefficients
    raise ConfigurationError(f"unknown data source {data_source!r}")


def recover_from_exact(bundle: OfflineBundle, u_exact: ExactField, data_source: str = "exact",
                       fine_level: int = 9, exact_order: int = DEFAULT_EXACT_ORDER,
                       exact_level: int = DEFAULT_EXACT_LEVEL, **kwargs) -> RecoveryResult:
    """Recover from data generated by ``u_exact`` and report the H^1 error."""
    w = measure_exact(bundle.sensors, u_exact, data_source, fine_level, exact_order, exact_level)
    res = online(bundle, w, **kwargs)
    return RecoveryResult(res.u_hat, res.a_hat, res.w_prime_hat, res.data_residual,
                          res.noise_amplification_bound, h1_error(res.u_hat, u_exact))
