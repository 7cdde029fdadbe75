# -*- coding: utf-8 -*-
import numpy as np  # type: ignore
import pytest  # type: ignore

from persistflow.mesh import (
    DIRICHLET, NEUMANN, MeshError, build_interval, build_rectangle,
)


def test_interval_both_ends():
    mesh = build_interval(2.0, 4)
    assert mesh.dim == 1
    assert mesh.n_nodes == 5
    assert mesh.elements.shape == (4, 2)
    assert mesh.measure == pytest.approx(2.0)
    assert mesh.dirichlet_nodes.tolist() == [0, 4]
    assert mesh.free_nodes.tolist() == [1, 2, 3]
    x, y = mesh.coordinates()
    assert x.tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert not y.any()


def test_interval_one_end():
    mesh = build_interval(1.0, 3, 'left')
    assert mesh.dirichlet_nodes.tolist() == [0]
    assert [f.tag for f in mesh.boundary_faces] == [DIRICHLET, NEUMANN]


def test_rectangle_numbering():
    mesh = build_rectangle(2.0, 3.0, 2, 3, ['left'])
    assert mesh.n_nodes == 12
    assert mesh.n_elements == 6
    assert mesh.measure == pytest.approx(6.0)
    # lexicographic, x first
    assert mesh.nodes[1].tolist() == [1.0, 0.0]
    assert mesh.nodes[3].tolist() == [0.0, 1.0]
    assert mesh.elements[0].tolist() == [0, 1, 4, 3]
    assert mesh.dirichlet_nodes.tolist() == [0, 3, 6, 9]
    assert len(mesh.faces_with_tag(DIRICHLET)) == 3
    assert len(mesh.faces_with_tag(NEUMANN)) == 2 + 2 + 3


def test_empty_dirichlet_boundary():
    with pytest.raises(MeshError) as e:
        build_rectangle(1.0, 1.0, 2, 2, [])
    assert '|Gamma_D| > 0' in str(e.value)


def test_invalid_meshes():
    with pytest.raises(ValueError):
        build_interval(1.0, 4, ['top'])
    with pytest.raises(MeshError):
        build_interval(1.0, 1)
    with pytest.raises(MeshError):
        build_interval(-1.0, 4)
    with pytest.raises(MeshError):
        build_rectangle(1.0, 1.0, 1, 4, ['left'])


def test_summary():
    summary = build_rectangle(1.0, 1.0, 2, 2, ['left', 'top']).summary()
    assert summary.startswith('2D mesh: 9 nodes, 4 elements')
    assert np.isfinite(build_interval(1.0, 2).measure)
