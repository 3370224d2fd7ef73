"""Measurement functionals: Gaussian local averages and point evaluations."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .fem import ExactField, FeFunction, gauss_rule, point_weights
from .mesh import GridMesh

DEFAULT_RADIUS = 0.1
DEFAULT_LOAD_ORDER = 4
# apply_to_exact for Gaussians: 6x6 Gauss on each cell of a 2**8 x 2**8 grid
DEFAULT_EXACT_ORDER = 6
DEFAULT_EXACT_LEVEL = 8


def _check_point(p):
    p = tuple(float(c) for c in p)
    if len(p) != 2 or not all(math.isfinite(c) and 0.0 <= c <= 1.0 for c in p):
        raise DomainError(f"point {p} outside the closed unit square")
    return p


@dataclass(frozen=True)
class GaussianAverage:
    """``v -> (2 pi r^2)^{-1/2} int_Omega v(z) exp(-|z - c|^2 / (2 r^2)) dz``.

    The weight is truncated to the unit square and not renormalized.
    """

    center: tuple[float, float]
    radius: float = DEFAULT_RADIUS

    def __post_init__(self):
        object.__setattr__(self, "center", _check_point(self.center))
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ConfigurationError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def normalization(self) -> float:
        return (2.0 * math.pi * self.radius ** 2) ** -0.5

    def weight(self, x, y):
        cx, cy = self.center
        r2 = self.radius ** 2
        return self.normalization * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * r2))

    def to_dict(self):
        return {"kind": "gaussian", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class PointEval:
    """``v -> v(point)``."""

    point: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "point", _check_point(self.point))

    def to_dict(self):
        return {"kind": "point", "point": list(self.point)}


MeasurementFunctional = GaussianAverage | PointEval


def functional_from_dict(d: dict) -> MeasurementFunctional:
    kind = d.get("kind")
    if kind == "gaussian":
        return GaussianAverage(tuple(d["center"]), d.get("radius", DEFAULT_RADIUS))
    if kind == "point":
        return PointEval(tuple(d["point"]))
    raise ConfigurationError(f"unknown functional kind {kind!r}")


def grid_centers(m: int) -> list[tuple[float, float]]:
    """Centers ``(i, j) / (sqrt(m) + 1)`` for ``i, j = 1..sqrt(m)``.

    Ordered with ``i`` (the x index) outer and ``j`` inner.
    """
    k = math.isqrt(m) if isinstance(m, int) and m >= 1 else -1
    if k < 1 or k * k != m:
        raise ConfigurationError(f"m must be a positive perfect square, got {m!r}")
    step = 1.0 / (k + 1)
    return [(i * step, j * step) for i in range(1, k + 1) for j in range(1, k + 1)]


@dataclass(frozen=True)
class SensorGrid:
    functionals: tuple

    def __post_init__(self):
        object.__setattr__(self, "functionals", tuple(self.functionals))
        if not self.functionals:
            raise ConfigurationError("a sensor grid needs at least one functional")

    @property
    def m(self) -> int:
        return len(self.functionals)

    def __len__(self):
        return self.m

    def __iter__(self):
        return iter(self.functionals)

    def __getitem__(self, i):
        return self.functionals[i]

    @classmethod
    def gaussian_grid(cls, m: int, radius: float = DEFAULT_RADIUS) -> "SensorGrid":
        return cls(tuple(GaussianAverage(c, radius) for c in grid_centers(m)))

    @classmethod
    def point_grid(cls, m: int) -> "SensorGrid":
        return cls(tuple(PointEval(c) for c in grid_centers(m)))

    def to_list(self) -> list[dict]:
        return [f.to_dict() for f in self.functionals]

    @classmethod
    def from_list(cls, items) -> "SensorGrid":
        return cls(tuple(functional_from_dict(d) for d in items))


def _hat_integrals(n_cells: int, weight_1d, order: int) -> np.ndarray:
    """``int_0^1 w(t) hat_k(t) dt`` for the 1D hats of a uniform grid."""
    t, wq = gauss_rule(order)
    h = 1.0 / n_cells
    x = (np.arange(n_cells)[:, None] + t[None, :]) * h
    fw = weight_1d(x) * wq * h
    out = np.zeros(n_cells + 1)
    out[:-1] += fw @ (1.0 - t)
    out[1:] += fw @ t
    return out


def load_vector(functional: MeasurementFunctional, mesh: GridMesh,
                order: int = DEFAULT_LOAD_ORDER) -> np.ndarray:
    """Action of the functional on every nodal basis function.

    The Gaussian weight and the Q1 basis are both tensor products, so the
    order x order tensor Gauss rule on each cell factors into two 1D rules.
    """
    if isinstance(functional, PointEval):
        ids, weights = point_weights(mesh, functional.point)
        out = np.zeros(mesh.num_nodes)
        np.add.at(out, ids[0], weights[0])
        return out
    if isinstance(functional, GaussianAverage):
        cx, cy = functional.center
        s = 2.0 * functional.radius ** 2
        gx = _hat_integrals(mesh.cells_per_side, lambda x: np.exp(-(x - cx) ** 2 / s), order)
        gy = _hat_integrals(mesh.cells_per_side, lambda y: np.exp(-(y - cy) ** 2 / s), order)
        # row-major node ids: j (y index) outer
        return functional.normalization * np.outer(gy, gx).ravel()
    raise TypeError(f"unsupported functional {functional!r}")


def apply_to_fe(functional: MeasurementFunctional, v: FeFunction,
                order: int = DEFAULT_LOAD_ORDER) -> float:
    return float(load_vector(functional, v.mesh, order) @ v.coefficients)


def apply_to_exact(functional: MeasurementFunctional, field: ExactField,
                   order: int = DEFAULT_EXACT_ORDER, level: int = DEFAULT_EXACT_LEVEL) -> float:
    """Functional applied to a closed-form field.

    Gaussian averages use an ``order`` x ``order`` Gauss rule on each cell of a
    uniform ``2**level`` grid.
    """
    value = field.value if isinstance(field, ExactField) else field
    if isinstance(functional, PointEval):
        x, y = functional.point
        return float(value(np.array(x), np.array(y)))
    if isinstance(functional, GaussianAverage):
        t, wq = gauss_rule(order)
        c = 2 ** level
        h = 1.0 / c
        nodes = ((np.arange(c)[:, None] + t[None, :]) * h).ravel()
        w1 = np.tile(wq, c) * h
        total = 0.0
        # one column of cells at a time keeps memory flat
        for k in range(0, nodes.size, order * 16):
            xs = nodes[k:k + order * 16]
            X, Y = np.meshgrid(xs, nodes, indexing="ij")
            vals = value(X, Y) * functional.weight(X, Y)
            total += float(w1[k:k + order * 16] @ vals @ w1)
        return total
    raise TypeError(f"unsupported functional {functional!r}")
