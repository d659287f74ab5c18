"""Moran coefficient and Moran eigenvectors."""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree

from .errors import DataError
from .spatial import ProximityMatrix, distance_matrix, proximity_matrix

EIGEN_RTOL = 1e-9


@dataclass(frozen=True)
class EigenBasis:
    """Eigenvectors of ``MCM`` with positive eigenvalues, largest first."""

    E: np.ndarray
    lam: np.ndarray
    connectivity_sum: float
    connectivity_range: float = float("nan")

    @property
    def L(self):
        return self.E.shape[1]

    @property
    def N(self):
        return self.E.shape[0]


def _as_matrix(C):
    if isinstance(C, ProximityMatrix):
        return C.C
    return np.asarray(C, dtype=float)


def centered(C):
    """``M C M`` with ``M = I - 11'/N``."""
    C = _as_matrix(C)
    MC = C - C.mean(axis=0, keepdims=True)
    return MC - MC.mean(axis=1, keepdims=True)


def moran_coefficient(y, C):
    """Moran coefficient ``(N / 1'C1) * y'MCMy / y'My``."""
    C = _as_matrix(C)
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    if C.shape != (n, n):
        raise ValueError("y and C disagree on N")
    total = C.sum()
    if total == 0:
        raise ValueError("connectivity matrix sums to zero")
    z = y - y.mean()
    denom = z @ z
    if not denom > 0:
        raise ValueError("Moran coefficient is undefined for a constant vector")
    return float(n / total * (z @ C @ z) / denom)


def mst_range(dist):
    """Longest edge of the Euclidean minimum spanning tree."""
    dist = np.asarray(dist, dtype=float)
    if dist.shape[0] < 2:
        raise DataError("need at least two sites")
    tree = minimum_spanning_tree(dist)
    r = tree.data.max() if tree.nnz else 0.0
    if not r > 0:
        raise DataError("all sites coincide")
    return float(r)


def exponential_connectivity(coords=None, dist=None):
    """Connectivity used for Moran eigenvectors: ``exp(-d / r)`` off the
    diagonal, ``r`` the longest minimum-spanning-tree edge."""
    if dist is None:
        dist = distance_matrix(coords)
    r = mst_range(dist)
    return proximity_matrix(dist, r), r


def moran_eigenbasis(C, rtol=EIGEN_RTOL, connectivity_range=float("nan")):
    """Eigen-decompose ``MCM`` and keep the positive part.

    Eigenpairs with ``lambda > rtol * max|lambda|`` are retained, sorted by
    descending eigenvalue. Each eigenvector's sign is fixed so that its
    largest-magnitude entry is positive.
    """
    if isinstance(C, ProximityMatrix) and C.row_standardized:
        raise ValueError("Moran eigenvectors need an unstandardized connectivity")
    C = _as_matrix(C)
    if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
        raise ValueError("connectivity matrix must be symmetric")
    MCM = centered(C)
    MCM = (MCM + MCM.T) / 2
    lam, V = np.linalg.eigh(MCM)
    order = np.argsort(-lam, kind="stable")
    lam, V = lam[order], V[:, order]
    scale = np.abs(lam).max() if lam.size else 0.0
    keep = lam > rtol * scale
    lam, V = lam[keep], V[:, keep]
    if V.size:
        pivot = np.abs(V).argmax(axis=0)
        V = V * np.sign(V[pivot, np.arange(V.shape[1])])
    return EigenBasis(E=V, lam=lam, connectivity_sum=float(C.sum()),
                      connectivity_range=connectivity_range)


def basis_for_coords(coords=None, dist=None):
    """Moran eigenbasis from the default exponential connectivity."""
    C, r = exponential_connectivity(coords, dist)
    return moran_eigenbasis(C, connectivity_range=r)
