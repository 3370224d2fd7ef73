import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonic_recovery.errors import ConfigurationError, DomainError
from harmonic_recovery.fem import FeFunction, evaluate, exp_cos_field, interpolate
from harmonic_recovery.functionals import (GaussianAverage, PointEval, SensorGrid, apply_to_exact, apply_to_fe,
                                           functional_from_dict, grid_centers, load_vector)
from harmonic_recovery.lab import fit_slope
from harmonic_recovery.mesh import build_mesh


def midpoint(fun, k):
    t = (np.arange(k) + 0.5) / k
    X, Y = np.meshgrid(t, t, indexing="ij")
    return float(np.sum(fun(X, Y)) / k ** 2)


def test_grid_centers():
    assert np.allclose(grid_centers(4), [(1 / 3, 1 / 3), (1 / 3, 2 / 3), (2 / 3, 1 / 3), (2 / 3, 2 / 3)])
    assert np.allclose(grid_centers(1), [(0.5, 0.5)])
    c9 = np.array(grid_centers(9))
    assert len(c9) == 9 and np.allclose(c9[0], (0.25, 0.25)) and np.allclose(c9[-1], (0.75, 0.75))
    for bad in (0, 2, 10, -4):
        with pytest.raises(ConfigurationError):
            grid_centers(bad)


def test_functional_validation():
    with pytest.raises(DomainError):
        PointEval((1.5, 0.2))
    with pytest.raises(ConfigurationError):
        GaussianAverage((0.5, 0.5), 0.0)


def test_point_load_examples():
    mesh = build_mesh(3)
    k = mesh.node_id(3, 5)
    e = load_vector(PointEval(tuple(mesh.coordinates[k])), mesh)
    assert e[k] == 1.0 and np.count_nonzero(e) == 1
    c = load_vector(PointEval((0.25, 0.75)), build_mesh(1))
    assert np.count_nonzero(c) == 4 and np.allclose(c[c != 0], 0.25)


def test_gaussian_mass_oracles():
    lam = GaussianAverage((0.5, 0.5), 0.1)
    total = load_vector(lam, build_mesh(6)).sum()
    assert total == pytest.approx(midpoint(lam.weight, 200), abs=1e-6)
    closed = math.sqrt(2 * math.pi) * 0.1 * math.erf(0.5 / (0.1 * math.sqrt(2))) ** 2
    assert total == pytest.approx(closed, abs=1e-6)
    ones = FeFunction(build_mesh(5), np.ones(build_mesh(5).num_nodes))
    assert apply_to_fe(lam, ones) == pytest.approx(closed, abs=1e-6)


def _truncated_1d(c, r):
    s = r * math.sqrt(2)
    return r * math.sqrt(math.pi / 2) * (math.erf((1 - c) / s) + math.erf(c / s))


def test_truncated_gaussian_near_corner():
    lam = GaussianAverage((0.05, 0.1), 0.1)
    closed = lam.normalization * _truncated_1d(0.05, 0.1) * _truncated_1d(0.1, 0.1)
    assert load_vector(lam, build_mesh(7)).sum() == pytest.approx(closed, rel=1e-10)


def test_gaussian_load_sign_and_decay():
    mesh = build_mesh(5)
    lam = GaussianAverage((0.75, 0.5), 0.1)
    v = load_vector(lam, mesh)
    assert np.all(v >= 0)
    d = np.linalg.norm(mesh.coordinates - lam.center, axis=1)
    near, far = v[d < 0.05].min(), v[d > 0.4].max()
    assert near > 1e3 * far


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), x=st.floats(0, 1), y=st.floats(0, 1))
def test_dot_product_identity(seed, x, y):
    mesh = build_mesh(3)
    rng = np.random.default_rng(seed)
    v = FeFunction(mesh, rng.standard_normal(mesh.num_nodes))
    p = PointEval((x, y))
    assert apply_to_fe(p, v) == pytest.approx(evaluate(v, (x, y)), abs=1e-12)
    g = GaussianAverage((x, y), 0.1)
    assert apply_to_fe(g, v) == pytest.approx(load_vector(g, mesh) @ v.coefficients, abs=1e-12)


def test_linearity(mesh3, rng):
    u, v = (FeFunction(mesh3, rng.standard_normal(mesh3.num_nodes)) for _ in range(2))
    lam = GaussianAverage((0.3, 0.6))
    combo = FeFunction(mesh3, 2.5 * u.coefficients - 0.5 * v.coefficients)
    assert apply_to_fe(lam, combo) == pytest.approx(2.5 * apply_to_fe(lam, u) - 0.5 * apply_to_fe(lam, v), abs=1e-12)


def test_apply_to_exact():
    u = exp_cos_field()
    assert apply_to_exact(PointEval((0.75, 0.5)), u) == pytest.approx(math.exp(0.75) * math.cos(0.5), abs=1e-12)
    assert apply_to_exact(PointEval((0.75, 0.5)), u) == pytest.approx(1.857842, abs=1e-6)
    assert apply_to_exact(PointEval((0.0, 0.0)), u) == 1.0
    lam = GaussianAverage((0.5, 0.5), 0.1)
    oracle = midpoint(lambda x, y: lam.weight(x, y) * u.value(x, y), 400)
    assert apply_to_exact(lam, u) == pytest.approx(oracle, abs=1e-6)


def test_point_value_of_interpolant_converges_quadratically():
    u = exp_cos_field()
    pts = np.random.default_rng(3).uniform(0, 1, (400, 2))
    exact = u.value(pts[:, 0], pts[:, 1])
    errs = [np.max(np.abs(evaluate(interpolate(build_mesh(n), u.value), pts) - exact)) for n in (3, 4, 5, 6)]
    assert 1.8 <= fit_slope([3, 4, 5, 6], errs) <= 2.2


def test_sensor_grid_serialization():
    grid = SensorGrid.gaussian_grid(9, 0.2)
    assert grid.m == 9 and all(isinstance(f, GaussianAverage) for f in grid)
    assert SensorGrid.from_list(grid.to_list()) == grid
    pts = SensorGrid.point_grid(4)
    assert functional_from_dict(pts.to_list()[2]) == PointEval((2 / 3, 1 / 3))
    with pytest.raises(ConfigurationError):
        functional_from_dict({"kind": "edge"})
