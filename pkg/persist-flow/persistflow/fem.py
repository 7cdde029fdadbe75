# -*- coding: utf-8 -*-
"""
Finite elements
===============

Conforming P1 (interval) and Q1 (rectangle) elements on structured
meshes, with Gauss-Legendre quadrature (2 points per direction by default).

Operators are ``scipy.sparse.csr_matrix`` instances assembled from element
blocks through COO triplets; field vectors are plain nodal ``ndarray``.
Coefficients may be passed as

* a number;
* a nodal array, shape ``(n_nodes,)`` - interpolated to quadrature points;
* quadrature point values, shape ``(n_elements, n_qp)``;
* a tensor per node ``(n_nodes, dim, dim)`` or per quadrature point
  ``(n_elements, n_qp, dim, dim)`` (weighted stiffness only).

Linear systems are solved on the free (non-Dirichlet) nodes: a banded
direct solver when the free-node operator is narrow (1D meshes), conjugate
gradients with a Jacobi preconditioner otherwise, with a direct sparse
fallback. Every solve is checked against a relative residual bound.
"""
import logging
from typing import Optional, Union, Callable

import numpy as np  # type: ignore
from scipy import sparse  # type: ignore
from scipy import linalg  # type: ignore
from scipy.sparse import linalg as splinalg  # type: ignore

from persistflow.mesh import Mesh
from persistflow import settings


logger = logging.getLogger(__name__)

# solve_banded is used when the free-node operator has at most this
# many diagonals
MAX_BANDED_DIAGONALS = 7


class AssemblyError(ValueError):
    pass


class LinearSolveError(RuntimeError):
    def __init__(self, message: str, *, method: str,
                 residual: float, info: int = 0) -> None:
        super().__init__("{} (method={}, relative residual={:.3e}, "
                         "info={})".format(message, method, residual, info))
        self.method = method
        self.residual = residual
        self.info = info


class FEMSpace:
    """
    Shape functions, their gradients and quadrature data of a mesh,
    precomputed for every element.

    Attributes
    ----------
    points : ndarray, shape (n_elements, n_qp, dim)
    weights : ndarray, shape (n_elements, n_qp)
        Quadrature weights including the element Jacobian.
    shape : ndarray, shape (n_qp, n_loc)
        Shape function values (identical on every element).
    grads : ndarray, shape (n_elements, n_qp, n_loc, dim)
    """
    def __init__(self, mesh: Mesh, *,
                 order: int = settings.QUADRATURE_ORDER) -> None:
        assert order >= 1
        self.mesh = mesh
        self.order = order
        xi, w = np.polynomial.legendre.leggauss(order)
        if mesh.dim == 1:
            self._init_interval(xi, w)
        else:
            self._init_rectangle(xi, w)
        self.n_qp = self.weights.shape[1]
        self.n_loc = self.shape.shape[1]
        self._lumped = None  # type: Optional[np.ndarray]

    def _init_interval(self, xi, w):
        mesh = self.mesh
        x0 = mesh.nodes[mesh.elements[:, 0], 0]
        h = mesh.element_measure
        self.shape = np.column_stack([(1 - xi) / 2, (1 + xi) / 2])
        self.points = (x0[:, None] + h[:, None] * (1 + xi[None, :]) / 2
                       )[:, :, None]
        self.weights = h[:, None] * w[None, :] / 2
        dN = np.array([-1.0, 1.0])
        grads = dN[None, None, :] / h[:, None, None]
        self.grads = np.broadcast_to(
            grads, (mesh.n_elements, len(xi), 2))[..., None].copy()

    def _init_rectangle(self, xi, w):
        mesh = self.mesh
        xa = np.array([-1.0, 1.0, 1.0, -1.0])
        ya = np.array([-1.0, -1.0, 1.0, 1.0])
        XI, ETA = np.meshgrid(xi, xi, indexing='ij')
        XI, ETA = XI.ravel(), ETA.ravel()
        W = np.outer(w, w).ravel()
        self.shape = (1 + XI[:, None] * xa) * (1 + ETA[:, None] * ya) / 4
        dxi = xa * (1 + ETA[:, None] * ya) / 4
        deta = ya * (1 + XI[:, None] * xa) / 4

        corner = mesh.nodes[mesh.elements[:, 0]]
        opposite = mesh.nodes[mesh.elements[:, 2]]
        hx = opposite[:, 0] - corner[:, 0]
        hy = opposite[:, 1] - corner[:, 1]
        px = corner[:, 0, None] + hx[:, None] * (1 + XI) / 2
        py = corner[:, 1, None] + hy[:, None] * (1 + ETA) / 2
        self.points = np.stack([px, py], axis=-1)
        self.weights = (hx * hy)[:, None] * W[None, :] / 4
        self.grads = np.stack([
            dxi[None, :, :] * (2 / hx)[:, None, None],
            deta[None, :, :] * (2 / hy)[:, None, None],
        ], axis=-1)

    # ---- evaluation ------------------------------------------------------

    def values(self, nodal: np.ndarray) -> np.ndarray:
        """ Interpolate a nodal field to quadrature points """
        local = nodal[self.mesh.elements]  # (n_el, n_loc, ...)
        return np.einsum('qa,ea...->eq...', self.shape, local)

    def gradients(self, nodal: np.ndarray) -> np.ndarray:
        """ FE gradient of a nodal field at quadrature points """
        local = nodal[self.mesh.elements]
        return np.einsum('eqad,ea->eqd', self.grads, local)

    def integrate(self, qp_values: np.ndarray) -> float:
        return float(np.sum(self.weights * qp_values))

    def element_integrals(self, qp_values: np.ndarray) -> np.ndarray:
        return np.sum(self.weights * qp_values, axis=1)

    @property
    def lumped_measure(self) -> np.ndarray:
        """ Row sums of the unit mass matrix: the measure carried by a node """
        if self._lumped is None:
            local = np.einsum('eq,qa->ea', self.weights, self.shape)
            self._lumped = scatter_vector(self.mesh.elements, local,
                                          self.mesh.n_nodes)
        return self._lumped

    def quadrature_coefficient(self, coeff) -> np.ndarray:
        """ Scalar coefficient at quadrature points """
        coeff = np.asarray(coeff, dtype=float)
        if coeff.ndim == 0:
            return np.full(self.weights.shape, float(coeff))
        if coeff.ndim == 1:
            assert coeff.shape == (self.mesh.n_nodes,)
            return self.values(coeff)
        assert coeff.shape == self.weights.shape, coeff.shape
        return coeff

    def quadrature_tensor(self, coeff) -> np.ndarray:
        """ Scalar or tensor coefficient as a tensor at quadrature points """
        coeff = np.asarray(coeff, dtype=float)
        dim = self.mesh.dim
        if coeff.ndim <= 2:
            c = self.quadrature_coefficient(coeff)
            return c[..., None, None] * np.eye(dim)
        if coeff.ndim == 3:
            assert coeff.shape == (self.mesh.n_nodes, dim, dim)
            return self.values(coeff)
        assert coeff.shape == self.weights.shape + (dim, dim), coeff.shape
        return coeff

    def quadrature_vector(self, coeff) -> np.ndarray:
        coeff = np.asarray(coeff, dtype=float)
        dim = self.mesh.dim
        if coeff.ndim == 1:
            assert coeff.shape == (dim,)
            return np.broadcast_to(coeff, self.weights.shape + (dim,))
        assert coeff.shape == self.weights.shape + (dim,), coeff.shape
        return coeff


def _check_finite(values: np.ndarray, what: str) -> None:
    n_el = values.shape[0]
    ok = np.isfinite(values.reshape(n_el, -1)).all(axis=1)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise AssemblyError("non-finite {} coefficient in element {}".format(
            what, bad))


def scatter_matrix(elements: np.ndarray, local: np.ndarray,
                   n_nodes: int) -> sparse.csr_matrix:
    """ Sum element blocks ``local[e, a, b]`` into a global CSR matrix """
    n_loc = elements.shape[1]
    rows = np.broadcast_to(elements[:, :, None], local.shape)
    cols = np.broadcast_to(elements[:, None, :], local.shape)
    assert local.shape[1:] == (n_loc, n_loc)
    coo = sparse.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())),
                            shape=(n_nodes, n_nodes))
    return coo.tocsr()


def scatter_vector(elements: np.ndarray, local: np.ndarray,
                   n_nodes: int) -> np.ndarray:
    return np.bincount(elements.ravel(), weights=local.ravel(),
                       minlength=n_nodes)


def assemble_weighted_stiffness(space: FEMSpace, coeff=1.0
                                ) -> sparse.csr_matrix:
    """
    Operator of the form ``a(u, v) = int c grad(u) . grad(v)``
    for a scalar or tensor coefficient ``c``.
    """
    C = space.quadrature_tensor(coeff)
    _check_finite(C, 'stiffness')
    local = np.einsum('eq,eqad,eqdf,eqbf->eab',
                      space.weights, space.grads, C, space.grads)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return scatter_matrix(space.mesh.elements, local, space.mesh.n_nodes)


def assemble_mass(space: FEMSpace, weight=1.0, *,
                  lumped: bool = False) -> sparse.csr_matrix:
    """
    Operator of the form ``m(u, v) = int w u v``. With ``lumped=True``
    the row sums are moved to the diagonal.
    """
    c = space.quadrature_coefficient(weight)
    _check_finite(c, 'mass')
    local = np.einsum('eq,qa,qb->eab', space.weights * c,
                      space.shape, space.shape)
    M = scatter_matrix(space.mesh.elements, local, space.mesh.n_nodes)
    if lumped:
        return sparse.diags(np.asarray(M.sum(axis=1)).ravel()).tocsr()
    return M


def assemble_load(space: FEMSpace,
                  f: Union[float, np.ndarray, Callable]) -> np.ndarray:
    """
    Load vector ``int f v``. ``f`` may be a callable of quadrature point
    coordinates ``(n_elements, n_qp, dim)``.
    """
    if callable(f):
        f = f(space.points)
    c = space.quadrature_coefficient(f)
    _check_finite(c, 'load')
    local = np.einsum('eq,qa->ea', space.weights * c, space.shape)
    return scatter_vector(space.mesh.elements, local, space.mesh.n_nodes)


def assemble_advective_rhs(space: FEMSpace, vector_coeff) -> np.ndarray:
    """
    Vector ``int q . grad(v)`` for a vector field ``q`` given at
    quadrature points (or a constant vector).
    """
    q = space.quadrature_vector(vector_coeff)
    _check_finite(q, 'vector')
    local = np.einsum('eq,eqd,eqad->ea', space.weights, q, space.grads)
    return scatter_vector(space.mesh.elements, local, space.mesh.n_nodes)


def _banded(A: sparse.csr_matrix):
    coo = A.tocoo()
    lower = int(max(0, (coo.row - coo.col).max(initial=0)))
    upper = int(max(0, (coo.col - coo.row).max(initial=0)))
    ab = np.zeros((lower + upper + 1, A.shape[0]))
    ab[upper + coo.row - coo.col, coo.col] = coo.data
    return (lower, upper), ab


def solve(op: sparse.spmatrix, rhs: np.ndarray,
          dirichlet_nodes: np.ndarray, dirichlet_values=0.0, *,
          method: Optional[str] = None) -> np.ndarray:
    """
    Solve ``op x = rhs`` on the free nodes with ``x = dirichlet_values``
    on ``dirichlet_nodes``. Rows of ``op`` and ``rhs`` at Dirichlet nodes
    are ignored.

    ``method`` is 'banded', 'cg' or 'direct'; by default it is chosen from
    the bandwidth of the free-node operator.
    """
    A = sparse.csr_matrix(op)
    n = A.shape[0]
    x = np.zeros(n)
    fixed = np.asarray(dirichlet_nodes, dtype=int)
    x[fixed] = dirichlet_values
    free = np.ones(n, dtype=bool)
    free[fixed] = False

    A_ff = A[free][:, free]
    b = rhs[free] - A[free][:, fixed] @ x[fixed]
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return x
    diag = A_ff.diagonal()
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise LinearSolveError("operator is not positive definite on the "
                               "free nodes", method='none',
                               residual=float('nan'))

    if method is None:
        (lower, upper), _ = _banded(A_ff)
        method = 'banded' if lower + upper + 1 <= MAX_BANDED_DIAGONALS else 'cg'

    info = 0
    if method == 'banded':
        bands, ab = _banded(A_ff)
        x_free = linalg.solve_banded(bands, ab, b, check_finite=False)
    elif method == 'cg':
        precond = sparse.diags(1.0 / diag)
        x_free, info = splinalg.cg(A_ff, b, rtol=settings.CG_RTOL, atol=0.0,
                                   maxiter=20 * A_ff.shape[0], M=precond)
    elif method == 'direct':
        x_free = splinalg.spsolve(A_ff.tocsc(), b)
    else:
        raise ValueError("Unsupported method: %s. Supported methods: %r" % (
            method, ['banded', 'cg', 'direct']))

    residual = np.linalg.norm(A_ff @ x_free - b) / b_norm
    if not residual <= settings.LINEAR_RTOL and method != 'direct':
        logger.warning("{} solve residual {:.2e} (info={}), falling back to "
                       "a direct solve".format(method, residual, info))
        method = 'direct'
        x_free = splinalg.spsolve(A_ff.tocsc(), b)
        residual = np.linalg.norm(A_ff @ x_free - b) / b_norm
    if not residual <= settings.LINEAR_RTOL:
        raise LinearSolveError("linear solve did not reach the residual "
                               "bound", method=method, residual=residual,
                               info=info)
    x[free] = x_free
    return x
