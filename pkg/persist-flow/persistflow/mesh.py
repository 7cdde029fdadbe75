# -*- coding: utf-8 -*-
"""
Meshes
======

Structured meshes of an interval (P1 elements) and of a rectangle
(Q1 elements). Every boundary face is tagged either ``dirichlet`` or
``neumann``; the Dirichlet part of the boundary must be nonempty,
otherwise constants are in the kernel of every pressure operator.

Node numbering is lexicographic, x first::

    6---7---8
    |   |   |
    3---4---5
    |   |   |
    0---1---2

Quadrilateral vertices are stored counter-clockwise starting from the
lower left corner.
"""
from typing import List, Iterable, Tuple, Union

import numpy as np  # type: ignore


DIRICHLET = 'dirichlet'
NEUMANN = 'neumann'

INTERVAL_SIDES = ('left', 'right')
RECTANGLE_SIDES = ('left', 'right', 'bottom', 'top')


class MeshError(ValueError):
    pass


class BoundaryFace:
    """ A boundary face: a node (1D) or an edge (2D) on one side """
    __slots__ = ('nodes', 'side', 'tag')

    def __init__(self, nodes: Tuple[int, ...], side: str, tag: str) -> None:
        self.nodes = nodes
        self.side = side
        self.tag = tag

    def __repr__(self):
        return "BoundaryFace(nodes=%r, side=%r, tag=%r)" % (
            self.nodes, self.side, self.tag)


class Mesh:
    """
    Structured mesh.

    Attributes
    ----------
    dim : int
        1 or 2.
    axes : list of ndarray
        Node coordinates along each axis (strictly increasing).
    nodes : ndarray, shape (n_nodes, dim)
    elements : ndarray of int, shape (n_elements, 2 ** dim)
    boundary_faces : list of BoundaryFace
    element_measure : ndarray, shape (n_elements,)
    """
    def __init__(self, *, axes: List[np.ndarray],
                 dirichlet_sides: Iterable[str]) -> None:
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.dim = len(self.axes)
        assert self.dim in (1, 2)
        for a in self.axes:
            if len(a) < 3 or np.any(np.diff(a) <= 0):
                raise MeshError("node coordinates must be strictly "
                                "increasing with at least 2 cells per axis")

        allowed = INTERVAL_SIDES if self.dim == 1 else RECTANGLE_SIDES
        self.dirichlet_sides = frozenset(dirichlet_sides)
        for side in self.dirichlet_sides:
            if side not in allowed:
                raise ValueError(
                    "Unsupported side: %s. Supported sides: %r" % (
                        side, list(allowed)))
        if not self.dirichlet_sides:
            raise MeshError("the Dirichlet boundary must be nonempty "
                            "(|Gamma_D| > 0)")

        if self.dim == 1:
            self._build_interval()
        else:
            self._build_rectangle()
        self.dirichlet_nodes = np.array(sorted({
            node for face in self.boundary_faces if face.tag == DIRICHLET
            for node in face.nodes
        }), dtype=int)
        free = np.ones(self.n_nodes, dtype=bool)
        free[self.dirichlet_nodes] = False
        self.free_nodes = np.flatnonzero(free)

    def _tag(self, side: str) -> str:
        return DIRICHLET if side in self.dirichlet_sides else NEUMANN

    def _build_interval(self) -> None:
        x = self.axes[0]
        n = len(x) - 1
        self.shape = (n,)
        self.nodes = x[:, None].copy()
        self.elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        self.element_measure = np.diff(x)
        self.boundary_faces = [
            BoundaryFace((0,), 'left', self._tag('left')),
            BoundaryFace((n,), 'right', self._tag('right')),
        ]

    def _build_rectangle(self) -> None:
        x, y = self.axes
        nx, ny = len(x) - 1, len(y) - 1
        self.shape = (nx, ny)
        X, Y = np.meshgrid(x, y)  # rows are y
        self.nodes = np.column_stack([X.ravel(), Y.ravel()])

        def node(i, j):
            return j * (nx + 1) + i

        I, J = np.meshgrid(np.arange(nx), np.arange(ny))
        I, J = I.ravel(), J.ravel()
        self.elements = np.column_stack([
            node(I, J), node(I + 1, J), node(I + 1, J + 1), node(I, J + 1)
        ])
        hx, hy = np.diff(x), np.diff(y)
        self.element_measure = (hx[I] * hy[J])

        faces = []  # type: List[BoundaryFace]
        for i in range(nx):
            faces.append(BoundaryFace((node(i, 0), node(i + 1, 0)),
                                      'bottom', self._tag('bottom')))
        for i in range(nx):
            faces.append(BoundaryFace((node(i, ny), node(i + 1, ny)),
                                      'top', self._tag('top')))
        for j in range(ny):
            faces.append(BoundaryFace((node(0, j), node(0, j + 1)),
                                      'left', self._tag('left')))
        for j in range(ny):
            faces.append(BoundaryFace((node(nx, j), node(nx, j + 1)),
                                      'right', self._tag('right')))
        self.boundary_faces = faces

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def measure(self) -> float:
        return float(self.element_measure.sum())

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """ (x, y) node coordinate arrays; y is zero for 1D meshes """
        x = self.nodes[:, 0]
        y = self.nodes[:, 1] if self.dim == 2 else np.zeros_like(x)
        return x, y

    def faces_with_tag(self, tag: str) -> List[BoundaryFace]:
        return [f for f in self.boundary_faces if f.tag == tag]

    def summary(self) -> str:
        return ("{}D mesh: {} nodes, {} elements, {} Dirichlet / {} Neumann "
                "faces, measure {:g}".format(
                    self.dim, self.n_nodes, self.n_elements,
                    len(self.faces_with_tag(DIRICHLET)),
                    len(self.faces_with_tag(NEUMANN)), self.measure))


def build_interval(length: float, n: int,
                   dirichlet_ends: Union[str, Iterable[str]] = 'both') -> Mesh:
    """
    Uniform mesh of ``(0, length)`` with ``n`` elements.
    ``dirichlet_ends`` is 'left', 'right', 'both' or a collection of sides.
    """
    if n < 2:
        raise MeshError("an interval mesh needs at least 2 elements")
    if length <= 0:
        raise MeshError("length must be positive")
    if dirichlet_ends == 'both':
        sides = INTERVAL_SIDES  # type: Iterable[str]
    elif isinstance(dirichlet_ends, str):
        sides = (dirichlet_ends,)
    else:
        sides = dirichlet_ends
    return Mesh(axes=[np.linspace(0.0, length, n + 1)],
                dirichlet_sides=sides)


def build_rectangle(lx: float, ly: float, nx: int, ny: int,
                    dirichlet_sides: Iterable[str]) -> Mesh:
    """ Uniform ``nx`` x ``ny`` mesh of ``(0, lx) x (0, ly)`` """
    if nx < 2 or ny < 2:
        raise MeshError("a rectangle mesh needs at least 2 cells per axis")
    if lx <= 0 or ly <= 0:
        raise MeshError("side lengths must be positive")
    return Mesh(axes=[np.linspace(0.0, lx, nx + 1),
                      np.linspace(0.0, ly, ny + 1)],
                dirichlet_sides=dirichlet_sides)
