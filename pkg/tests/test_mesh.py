import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonic_recovery.errors import ConfigurationError, DomainError
from harmonic_recovery.mesh import build_mesh, locate_cell, locate_cells


@pytest.mark.parametrize("n,nodes,boundary,interior", [(1, 9, 8, 1), (4, 289, 64, 225), (9, 263169, 2048, 511 ** 2)])
def test_counts(n, nodes, boundary, interior):
    mesh = build_mesh(n)
    assert mesh.num_nodes == nodes
    assert len(mesh.boundary_chain) == boundary
    assert len(mesh.interior_ids) == interior


@pytest.mark.parametrize("n", [0, 13, -1])
def test_level_out_of_range(n):
    with pytest.raises(ConfigurationError):
        build_mesh(n)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_chain_is_closed_unit_step_cycle(n):
    mesh = build_mesh(n)
    xy = mesh.coordinates[mesh.boundary_chain]
    assert np.allclose(xy[0], (0.0, 0.0))
    steps = np.abs(np.diff(np.vstack([xy, xy[:1]]), axis=0))
    # exactly one coordinate moves by h per step, and the loop has length 4
    assert np.allclose(np.sort(steps, axis=1), [[0.0, mesh.h]] * len(xy))
    assert np.isclose(steps.sum(), 4.0)
    # counterclockwise: signed area positive
    x, y = xy[:, 0], xy[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [1, 3, 6])
def test_partition_of_nodes(n):
    mesh = build_mesh(n)
    ids = np.concatenate([mesh.boundary_chain, mesh.interior_ids])
    assert np.array_equal(np.sort(ids), np.arange(mesh.num_nodes))


@pytest.mark.parametrize("n", [1, 4, 8])
def test_cell_areas_sum_to_one(n):
    mesh = build_mesh(n)
    assert abs(mesh.num_cells * mesh.h ** 2 - 1.0) <= 1e-14


def test_row_major_numbering():
    mesh = build_mesh(2)
    assert mesh.node_id(1, 0) == 1
    assert mesh.node_id(0, 1) == 5
    assert np.allclose(mesh.coordinates[7], (0.5, 0.25))


@pytest.mark.parametrize("n,p,cell,local", [
    (1, (0.25, 0.25), (0, 0), (0.5, 0.5)),
    (1, (0.5, 0.5), (1, 1), (0.0, 0.0)),
    (2, (1.0, 1.0), (3, 3), (1.0, 1.0)),
])
def test_locate_cell_examples(n, p, cell, local):
    c, xi = locate_cell(build_mesh(n), p)
    assert c == cell
    assert np.allclose(xi, local)


@pytest.mark.parametrize("p", [(-0.1, 0.5), (0.5, 1.0001), (np.nan, 0.5)])
def test_locate_cell_outside(p):
    with pytest.raises(DomainError):
        locate_cell(build_mesh(2), p)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 8), x=st.floats(0, 1), y=st.floats(0, 1))
def test_locate_cell_reconstructs_point(n, x, y):
    mesh = build_mesh(n)
    (ci, cj), (xi, eta) = locate_cell(mesh, (x, y))
    assert 0 <= ci < mesh.cells_per_side and 0 <= cj < mesh.cells_per_side
    assert 0.0 <= xi <= 1.0 and 0.0 <= eta <= 1.0
    assert np.isclose((ci + xi) * mesh.h, x, atol=1e-14)
    assert np.isclose((cj + eta) * mesh.h, y, atol=1e-14)
    cells, local = locate_cells(mesh, np.array([[x, y]]))
    assert tuple(cells[0]) == (ci, cj)
