# -*- coding: utf-8 -*-
"""
Spectral projection
===================

First ``N`` eigenpairs of the discrete Laplacian with homogeneous
Dirichlet conditions on the Dirichlet part of the boundary and natural
(Neumann) conditions elsewhere:

.. math::

    \\int \\nabla w_i \\cdot \\nabla v = \\lambda_i \\int w_i v
    \\quad \\forall v \\in V_h

The eigenvectors are mass-orthonormal, and the projection

.. math::

    P_N[v] = \\sum_{i \\le N} (v, w_i)_{L^2} w_i

is computed with the same mass matrix; with these discrete forms
:math:`P_N` is an orthogonal projection in both :math:`L^2` and the
stiffness seminorm.
"""
import logging
from typing import Optional

import numpy as np  # type: ignore
from scipy import linalg  # type: ignore
from scipy import sparse  # type: ignore
from scipy.sparse import linalg as splinalg  # type: ignore

from persistflow import settings
from persistflow.fem import FEMSpace, assemble_mass, assemble_weighted_stiffness
from persistflow.mesh import Mesh
from persistflow.utils import log_time


logger = logging.getLogger(__name__)

# below this many free nodes the dense generalized solver is used
DENSE_LIMIT = 1500


class BasisError(ValueError):
    pass


class EigenBasis:
    """
    Mass-orthonormal eigenvectors of the mixed-BC Laplacian.

    Attributes
    ----------
    eigenvalues : ndarray, shape (N,)
        Nondecreasing, positive.
    vectors : ndarray, shape (n_nodes, N)
        Columns are nodal modes; zero at Dirichlet nodes.
    mass : csr_matrix
        Consistent mass matrix used for projection.
    stiffness : csr_matrix
        Unconstrained stiffness matrix.
    """
    def __init__(self, *, mesh: Mesh, eigenvalues: np.ndarray,
                 vectors: np.ndarray, mass: sparse.csr_matrix,
                 stiffness: sparse.csr_matrix) -> None:
        self.mesh = mesh
        self.eigenvalues = eigenvalues
        self.vectors = vectors
        self.mass = mass
        self.stiffness = stiffness
        self.eigenvalues.setflags(write=False)
        self.vectors.setflags(write=False)

    @property
    def N(self) -> int:
        return self.vectors.shape[1]

    @property
    def is_complete(self) -> bool:
        """ True if the modes span every field vanishing on Dirichlet nodes """
        return self.N == len(self.mesh.free_nodes)

    def residuals(self) -> np.ndarray:
        """ Relative residuals of the eigenrelation on the free nodes """
        free = self.mesh.free_nodes
        K = self.stiffness[free][:, free]
        M = self.mass[free][:, free]
        V = self.vectors[free]
        R = K @ V - (M @ V) * self.eigenvalues
        return (np.linalg.norm(R, axis=0) /
                np.linalg.norm(K @ V, axis=0))

    def mode(self, i: int) -> np.ndarray:
        return np.array(self.vectors[:, i])


@log_time
def compute_basis(mesh: Mesh, N: int,
                  space: Optional[FEMSpace] = None) -> EigenBasis:
    """
    First ``N`` eigenpairs. Small problems use a dense symmetric
    generalized solver; larger ones use shift-invert Lanczos around zero.
    Either way the result is re-orthonormalized in the mass inner product.
    """
    free = mesh.free_nodes
    n_free = len(free)
    if N < 1 or N > n_free:
        raise BasisError("N must be in [1, {}] (free nodes), got {}".format(
            n_free, N))
    if space is None:
        space = FEMSpace(mesh)
    K = assemble_weighted_stiffness(space, 1.0)
    M = assemble_mass(space, 1.0)
    K_ff = K[free][:, free]
    M_ff = M[free][:, free]

    if n_free <= DENSE_LIMIT or N > n_free // 2:
        lam, V = linalg.eigh(K_ff.toarray(), M_ff.toarray(),
                             subset_by_index=[0, N - 1])
    else:
        lam, V = splinalg.eigsh(K_ff.tocsc(), k=N, M=M_ff.tocsc(), sigma=0.0,
                                which='LM')
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]

    # mass re-orthonormalization: V <- V L^{-T} with V^T M V = L L^T
    gram = V.T @ (M_ff @ V)
    L = linalg.cholesky((gram + gram.T) / 2, lower=True)
    V = linalg.solve_triangular(L, V.T, lower=True).T

    vectors = np.zeros((mesh.n_nodes, N))
    vectors[free] = V
    if np.any(lam <= 0):
        raise BasisError("non-positive eigenvalue {:g}; is the Dirichlet "
                         "boundary empty?".format(lam.min()))
    logger.info("spectral basis: N={}, eigenvalues [{:.6g} .. {:.6g}]".format(
        N, lam[0], lam[-1]))
    return EigenBasis(mesh=mesh, eigenvalues=np.asarray(lam, dtype=float),
                      vectors=vectors, mass=M, stiffness=K)


def project(basis: EigenBasis, v: np.ndarray) -> np.ndarray:
    """ :math:`P_N[v] = W (W^T M v)` """
    assert v.shape == (basis.mesh.n_nodes,)
    coefficients = basis.vectors.T @ (basis.mass @ v)
    return basis.vectors @ coefficients


def l2_gram(basis: EigenBasis) -> np.ndarray:
    """ Mass inner products of the modes; the identity up to rounding """
    return basis.vectors.T @ (basis.mass @ basis.vectors)


def l2_inner(basis: EigenBasis, v: np.ndarray, w: np.ndarray) -> float:
    return float(v @ (basis.mass @ w))


def stiffness_inner(basis: EigenBasis, v: np.ndarray, w: np.ndarray) -> float:
    """ :math:`\\int \\nabla v \\cdot \\nabla w` """
    return float(v @ (basis.stiffness @ w))


def stiffness_seminorm(basis: EigenBasis, v: np.ndarray) -> float:
    return float(np.sqrt(max(stiffness_inner(basis, v, v), 0.0)))


def default_modes(mesh: Mesh) -> int:
    return min(settings.MAX_MODES, len(mesh.free_nodes))
