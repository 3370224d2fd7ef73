import numpy as np
import pytest

from harmonic_recovery import representers as rep_mod
from harmonic_recovery.errors import SolverError
from harmonic_recovery.fem import (BoundaryFunction, FeFunction, assemble_boundary_h1, assemble_stiffness,
                                   harmonic_extension, h1_norm)
from harmonic_recovery.functionals import GaussianAverage, PointEval, SensorGrid, apply_to_fe, load_vector
from harmonic_recovery.mesh import build_mesh
from harmonic_recovery.representers import (assemble_saddle_system, compute_representer,
                                            compute_representer_set, galerkin_representer, harmonicity_residual)

FUNCTIONALS = [GaussianAverage((0.75, 0.5)), PointEval((0.75, 0.5)), PointEval((0.0, 0.3)),
               GaussianAverage((0.05, 0.95), 0.2)]


def test_saddle_system_shape_and_symmetry():
    mesh = build_mesh(2)
    S, rhs = assemble_saddle_system(mesh, GaussianAverage((0.4, 0.6)))
    assert S.shape == (34, 34)
    assert not np.any(rhs[mesh.num_nodes:])
    assert np.allclose(rhs[:mesh.num_nodes], load_vector(GaussianAverage((0.4, 0.6)), mesh))
    assert abs(S - S.T).max() <= 1e-15
    assert S[mesh.num_nodes:, mesh.num_nodes:].nnz == 0


@pytest.mark.parametrize("functional", FUNCTIONALS)
def test_block_and_direct_paths_agree(mesh4, functional):
    a = compute_representer(mesh4, functional)
    b = compute_representer(mesh4, functional, method="direct")
    assert np.allclose(a.phi.coefficients, b.phi.coefficients, rtol=0, atol=1e-10 * np.abs(b.phi.coefficients).max())
    assert a.solver_residual <= 1e-10 and b.solver_residual <= 1e-10
    assert a.harmonicity_residual <= 1e-8


@pytest.mark.parametrize("functional", FUNCTIONALS)
def test_galerkin_path_agrees(functional):
    mesh = build_mesh(3)
    saddle = compute_representer(mesh, functional).phi
    galerkin = galerkin_representer(mesh, functional)
    diff = FeFunction(mesh, saddle.coefficients - galerkin.coefficients)
    assert h1_norm(diff) <= 1e-8


@pytest.mark.parametrize("functional", FUNCTIONALS)
def test_reproducing_identity(functional, rng):
    mesh = build_mesh(4)
    phi = compute_representer(mesh, functional).phi
    A = assemble_boundary_h1(mesh)
    phi_g = phi.coefficients[mesh.boundary_chain]
    for _ in range(10):
        g = rng.standard_normal(mesh.num_boundary)
        lhs = phi_g @ (A @ g)
        rhs = apply_to_fe(functional, harmonic_extension(mesh, BoundaryFunction(mesh, g)))
        assert abs(lhs - rhs) <= 1e-7 * max(abs(rhs), 1e-300) or abs(lhs - rhs) <= 1e-12
    # self-consistency: lambda(phi) is the squared trace norm
    assert apply_to_fe(functional, phi) == pytest.approx(phi_g @ (A @ phi_g), rel=1e-9)
    assert apply_to_fe(functional, phi) > 0


def test_harmonicity_residual_definition(mesh3, rng):
    v = FeFunction(mesh3, rng.standard_normal(mesh3.num_nodes))
    r = (assemble_stiffness(mesh3) @ v.coefficients)[mesh3.interior_ids]
    assert harmonicity_residual(v) == pytest.approx(np.linalg.norm(r) / max(1.0, np.linalg.norm(v.coefficients)))


def test_set_examples():
    mesh = build_mesh(3)
    one = compute_representer_set(mesh, SensorGrid((PointEval((0.5, 0.5)),)))
    assert len(one) == 1 and one[0].harmonicity_residual <= 1e-8
    twice = compute_representer_set(mesh, SensorGrid((GaussianAverage((0.3, 0.3)),) * 2))
    assert np.array_equal(twice[0].phi.coefficients, twice[1].phi.coefficients)


def test_gramian_symmetry_m4(mesh4):
    sensors = SensorGrid.gaussian_grid(4)
    reps = compute_representer_set(mesh4, sensors)
    L = np.column_stack([load_vector(f, mesh4) for f in sensors])
    G = reps.phi_matrix @ L
    assert np.max(np.abs(G - G.T)) <= 1e-8 * np.max(np.abs(G))


def test_threaded_set_is_deterministic(mesh4):
    sensors = SensorGrid.point_grid(9)
    serial = compute_representer_set(mesh4, sensors).phi_matrix
    threaded = compute_representer_set(mesh4, sensors, threads=3).phi_matrix
    assert np.array_equal(serial, threaded)


def test_set_failure_carries_index(mesh3, monkeypatch):
    real = rep_mod.compute_representer

    def flaky(mesh, functional, tol, **kw):
        if functional == PointEval((0.5, 0.5)):
            raise SolverError("forced", residual=1.0)
        return real(mesh, functional, tol, **kw)

    monkeypatch.setattr(rep_mod, "compute_representer", flaky)
    sensors = SensorGrid((PointEval((0.1, 0.1)), PointEval((0.2, 0.2)), PointEval((0.5, 0.5))))
    with pytest.raises(SolverError) as info:
        compute_representer_set(mesh3, sensors)
    assert info.value.index == 2 and info.value.residual == 1.0


def test_norm_diagnostics(mesh4):
    reps = compute_representer_set(mesh4, SensorGrid.gaussian_grid(4))
    assert np.all(reps.h1_norms > 0) and np.all(reps.x1_norms > 0)
    assert reps.C0_hat == pytest.approx(max(h1_norm(s.phi) for s in reps.solutions))
