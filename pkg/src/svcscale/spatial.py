"""Distances, exponential kernels and proximity matrices.

Everything here works on dense ``N x N`` arrays; the sample sizes this
package targets (a few hundred sites) never need sparse storage.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError


class KernelMode(str, Enum):
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class SpatialDataset:
    """Sample sites with a design matrix and response.

    ``X`` must carry the intercept in its first column.
    """

    coords: np.ndarray
    X: np.ndarray
    y: np.ndarray
    names: tuple = ()
    has_duplicates: bool = field(init=False, default=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise DataError("coords must be an N x 2 array")
        n, k = X.shape
        if coords.shape[0] != n or y.shape[0] != n:
            raise DataError("coords, X and y disagree on N")
        if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(X))
                and np.all(np.isfinite(y))):
            raise DataError("non-finite values in dataset")
        if n < k + 1:
            raise DataError(f"need N >= K + 1, got N={n}, K={k}")
        if not np.all(X[:, 0] == 1.0):
            raise DataError("first column of X must be the intercept")
        names = tuple(self.names) or ("intercept",) + tuple(
            f"x{j}" for j in range(1, k))
        if len(names) != k:
            raise DataError("names must have one entry per column of X")
        dup = len(np.unique(coords, axis=0)) < n
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "has_duplicates", dup)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def K(self):
        return self.X.shape[1]

    def with_response(self, y):
        return SpatialDataset(self.coords, self.X, y, self.names)


@dataclass(frozen=True)
class KernelSpec:
    """Exponential kernel configuration.

    ``bandwidths`` holds one value (single-bandwidth GWR) or one value per
    coefficient (flexible bandwidth). In adaptive mode the values are
    nearest-neighbour counts, counting the site itself as the first
    neighbour.
    """

    mode: KernelMode
    bandwidths: tuple

    def __post_init__(self):
        mode = KernelMode(self.mode)
        bw = tuple(float(b) for b in np.atleast_1d(self.bandwidths))
        if not bw:
            raise ValueError("at least one bandwidth is required")
        if mode is KernelMode.FIXED:
            if any(not b > 0 for b in bw):
                raise ValueError("fixed bandwidths must be positive")
        else:
            if any(b != int(b) or b < 2 for b in bw):
                raise ValueError("adaptive bandwidths must be integer "
                                 "neighbour counts >= 2")
            bw = tuple(int(b) for b in bw)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "bandwidths", bw)

    @property
    def flexible(self):
        return len(self.bandwidths) > 1

    def validate_for(self, data):
        """Check the spec against a dataset's N and K."""
        n, k = data.N, data.K
        if len(self.bandwidths) not in (1, k):
            raise ValueError(f"expected 1 or {k} bandwidths, "
                             f"got {len(self.bandwidths)}")
        if self.mode is KernelMode.ADAPTIVE:
            for b in self.bandwidths:
                if not k + 1 <= b <= n:
                    raise ValueError(f"adaptive neighbour count {b} "
                                     f"outside [{k + 1}, {n}]")


@dataclass(frozen=True)
class ProximityMatrix:
    C: np.ndarray
    row_standardized: bool = False

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("proximity matrix must be square")
        if np.any(np.diag(C) != 0):
            raise ValueError("proximity matrix must have a zero diagonal")
        if np.any(C < 0):
            raise ValueError("proximity matrix must be nonnegative")
        object.__setattr__(self, "C", C)

    @property
    def N(self):
        return self.C.shape[0]


def distance_matrix(coords):
    """Pairwise Euclidean distances between planar coordinates."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[None, :]
    if not np.all(np.isfinite(coords)):
        raise DataError("coordinates must be finite")
    D = cdist(coords, coords)
    np.fill_diagonal(D, 0.0)
    return D


def sorted_distances(dist):
    """Row-wise ascending distances; ties keep sample-index order."""
    idx = np.argsort(dist, axis=1, kind="stable")
    return np.take_along_axis(dist, idx, axis=1)


def adaptive_bandwidths(dist, j, sorted_dist=None):
    """Distance from every site to its ``j``-th nearest neighbour.

    The site itself is its own first neighbour, so ``j = N`` reaches the
    farthest site.
    """
    if sorted_dist is None:
        sorted_dist = sorted_distances(dist)
    n = sorted_dist.shape[1]
    j = int(j)
    if not 1 <= j <= n:
        raise ValueError(f"neighbour count {j} outside [1, {n}]")
    h = sorted_dist[:, j - 1]
    if np.any(h <= 0):
        bad = int(np.flatnonzero(h <= 0)[0])
        raise DataError(f"adaptive bandwidth is zero at site {bad}: its "
                        f"{j} nearest neighbours are duplicates")
    return h


def exponential_weights(dist, bandwidth):
    """``exp(-d / b)`` with a scalar or per-row bandwidth."""
    b = np.asarray(bandwidth, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    if np.isinf(b).all():
        return np.ones_like(dist)
    return np.exp(-dist / b)


def kernel_weights(dist, spec, k=None, sorted_dist=None):
    """Kernel weight matrix; row ``i`` is the diagonal of ``G(s_i)``.

    Parameters
    ----------
    dist : (N, N) ndarray
        Distance matrix.
    spec : KernelSpec
        Kernel mode and bandwidth(s).
    k : int, optional
        Zero-based coefficient index. Required when ``spec`` holds one
        bandwidth per coefficient.
    sorted_dist : ndarray, optional
        Cached output of :func:`sorted_distances` for adaptive mode.
    """
    if spec.flexible:
        if k is None:
            raise ValueError("coefficient index required for a flexible spec")
        if not 0 <= k < len(spec.bandwidths):
            raise ValueError(f"coefficient index {k} out of range")
        b = spec.bandwidths[k]
    else:
        b = spec.bandwidths[0]
    if spec.mode is KernelMode.ADAPTIVE:
        b = adaptive_bandwidths(dist, b, sorted_dist)
    return exponential_weights(dist, b)


def proximity_matrix(dist, b, row_standardize=False):
    """Symmetric exponential proximity with zero diagonal.

    With ``row_standardize`` every row is scaled to sum to one, which is
    the moving-average operator used by the data generators.
    """
    if not b > 0:
        raise ValueError("proximity bandwidth must be positive")
    C = np.exp(-np.asarray(dist, dtype=float) / b)
    np.fill_diagonal(C, 0.0)
    if row_standardize:
        rs = C.sum(axis=1)
        if np.any(rs <= 0):
            raise DataError("row with no neighbours cannot be standardized")
        C = C / rs[:, None]
    return ProximityMatrix(C, row_standardized=row_standardize)
