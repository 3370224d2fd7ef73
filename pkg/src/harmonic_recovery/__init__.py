"""Optimal recovery of harmonic-type fields from a finite set of linear
measurements, discretized with bilinear finite elements on the unit square."""
from .errors import (ConfigurationError, DomainError, IllConditionedGramianWarning, RecoveryError,
                     SolverError)
from .fem import (BoundaryFunction, ExactField, FeFunction, exp_cos_field, h1_error, harmonic_extension,
                  solve_dirichlet_poisson)
from .functionals import GaussianAverage, PointEval, SensorGrid, grid_centers
from .mesh import GridMesh, build_mesh, locate_cell
from .recovery import OfflineBundle, RecoveryDiagnostics, RecoveryResult, offline, online
from .representers import RepresenterSet, compute_representer, compute_representer_set

__all__ = [
    "BoundaryFunction", "ConfigurationError", "DomainError", "ExactField", "FeFunction", "GaussianAverage",
    "GridMesh", "IllConditionedGramianWarning", "OfflineBundle", "PointEval", "RecoveryDiagnostics",
    "RecoveryError", "RecoveryResult", "RepresenterSet", "SensorGrid", "SolverError", "build_mesh",
    "compute_representer", "compute_representer_set", "exp_cos_field", "grid_centers", "h1_error",
    "harmonic_extension", "locate_cell", "offline", "online", "solve_dirichlet_poisson",
]
