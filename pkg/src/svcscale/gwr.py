"""Geographically weighted regression with a single bandwidth.

Local systems for all sites are assembled at once: with ``W`` the kernel
matrix (row i holds the weights used at site i) the stack of ``X'G(s_i)X``
is ``W @ outer(x_j, x_j)``, so each bandwidth evaluation costs one dense
matrix product plus ``N`` tiny solves.
"""

import math

import numpy as np

from .errors import DataError, FitError
from .results import Criterion, ModelTag, SvcFit
from .spatial import (KernelMode, KernelSpec, adaptive_bandwidths,
                      distance_matrix, exponential_weights, sorted_distances)

COND_LIMIT = 1e12
GOLDEN_RTOL = 1e-3
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class Geometry:
    """Distance matrix of a dataset with lazily cached neighbour ordering."""

    def __init__(self, coords):
        self.dist = distance_matrix(coords)
        self._sorted = None

    @property
    def sorted_dist(self):
        if self._sorted is None:
            self._sorted = sorted_distances(self.dist)
        return self._sorted

    def weights(self, mode, bandwidth):
        mode = KernelMode(mode)
        if mode is KernelMode.ADAPTIVE:
            h = adaptive_bandwidths(self.dist, bandwidth, self.sorted_dist)
            return exponential_weights(self.dist, h)
        return exponential_weights(self.dist, bandwidth)

    def fixed_search_range(self):
        d = self.dist[self.dist > 0]
        if d.size == 0:
            raise FitError("bandwidth search range is empty: all sites coincide")
        return d.min() / 2.0, 2.0 * d.max()


def _invert_local(A):
    """Invert a stack of symmetric local systems.

    Returns the (pseudo-)inverses and a mask of systems whose condition
    number exceeds ``COND_LIMIT``; those get a Moore-Penrose inverse with
    the same cutoff.
    """
    n, k, _ = A.shape
    if k == 1:
        a = A[:, 0, 0]
        ref = np.max(np.abs(a)) if n else 0.0
        singular = ~(a > ref / COND_LIMIT)
        inv = np.zeros_like(a)
        inv[~singular] = 1.0 / a[~singular]
        return inv[:, None, None], singular
    ev = np.linalg.eigvalsh(A)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(ev[:, 0] > 0, ev[:, -1] / ev[:, 0], np.inf)
    singular = ~(cond <= COND_LIMIT)
    inv = np.empty_like(A)
    ok = ~singular
    if ok.any():
        inv[ok] = np.linalg.inv(A[ok])
    if singular.any():
        inv[singular] = np.linalg.pinv(A[singular], rcond=1.0 / COND_LIMIT,
                                       hermitian=True)
    return inv, singular


def local_regression(W, X, y, loo=False):
    """Weighted least squares at every site.

    Parameters
    ----------
    W : (N, N) ndarray
        Kernel weights, row i used for site i.
    X : (N, K) ndarray
    y : (N,) ndarray
    loo : bool
        Also return leave-one-out predictions (site i's own weight zeroed).

    Returns
    -------
    dict with ``B`` (N, K), ``hat_diag`` (N,), ``singular`` (N,) bool and,
    when requested, ``loo_pred`` (N,).
    """
    n, k = X.shape
    outer = (X[:, :, None] * X[:, None, :]).reshape(n, k * k)
    A = (W @ outer).reshape(n, k, k)
    rhs = W @ (X * y[:, None])
    inv, singular = _invert_local(A)
    B = np.einsum("nij,nj->ni", inv, rhs)
    w_self = np.diagonal(W)
    hat_diag = w_self * np.einsum("ni,nij,nj->n", X, inv, X)
    out = {"B": B, "hat_diag": hat_diag, "singular": singular}
    if loo:
        A_loo = A - w_self[:, None, None] * (X[:, :, None] * X[:, None, :])
        rhs_loo = rhs - (w_self * y)[:, None] * X
        inv_loo, _ = _invert_local(A_loo)
        beta_loo = np.einsum("nij,nj->ni", inv_loo, rhs_loo)
        out["loo_pred"] = np.einsum("ni,ni->n", X, beta_loo)
    return out


def aicc(rss, trace, n):
    """Corrected AIC of a linear smoother with ``trace`` effective parameters.

    Returns ``inf`` when ``n - 2 - trace <= 0``.
    """
    denom = n - 2.0 - trace
    if denom <= 0:
        return math.inf
    rss = max(rss, np.finfo(float).tiny)
    sigma = math.sqrt(rss / n)
    return 2 * n * math.log(sigma) + n * math.log(2 * math.pi) + n * (n + trace) / denom


def score_local_fit(W, X, y, criterion):
    """Criterion value (lower is better) of the local fit with weights W."""
    criterion = Criterion(criterion)
    res = local_regression(W, X, y, loo=criterion is Criterion.CV)
    if criterion is Criterion.CV:
        err = y - res["loo_pred"]
        return float(np.mean(err * err))
    fitted = np.einsum("ni,ni->n", X, res["B"])
    r = y - fitted
    return aicc(float(r @ r), float(res["hat_diag"].sum()), len(y))


def golden_section(f, lo, hi, rtol=GOLDEN_RTOL):
    """Minimise ``f`` over a bandwidth interval by golden-section search.

    The search runs on the log scale and stops once the bracket's ratio
    is within ``1 + rtol``. The best evaluated point is returned, with the
    interval endpoints included among the candidates; ties go to the
    larger bandwidth.
    """
    if not 0 < lo < hi:
        raise FitError(f"empty search range [{lo}, {hi}]")
    cache = {}

    def F(t):
        if t not in cache:
            v = f(math.exp(t))
            cache[t] = v if np.isfinite(v) else math.inf
        return cache[t]

    a, b = math.log(lo), math.log(hi)
    F(a)
    F(b)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = F(c), F(d)
    stop = math.log1p(rtol)
    while b - a > stop:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = F(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = F(d)
    t_best = min(cache, key=lambda t: (cache[t], -t))
    if not np.isfinite(cache[t_best]):
        raise FitError("calibration criterion is non-finite over the whole range")
    return math.exp(t_best), cache[t_best]


def exhaustive_search(f, candidates):
    """Evaluate ``f`` on every integer candidate; ties go to the smallest."""
    best, best_val = None, math.inf
    for j in candidates:
        v = f(j)
        if np.isfinite(v) and v < best_val:
            best, best_val = j, v
    if best is None:
        raise FitError("calibration criterion is non-finite over the whole range")
    return best, best_val


def adaptive_search_range(n, k):
    lo = k + 2
    if lo > n:
        raise FitError(f"adaptive search range [{lo}, {n}] is empty")
    return range(lo, n + 1)


def calibrate_bandwidth(data, mode, criterion=Criterion.AICC, objective=None,
                        geometry=None):
    """Bandwidth minimising the calibration criterion.

    Fixed mode runs a golden-section search over log-bandwidth on
    ``[d_min / 2, 2 d_max]`` (``d_min`` the smallest positive distance);
    adaptive mode tries every neighbour count in ``[K + 2, N]``.

    ``objective`` maps a bandwidth to a criterion value; by default it is
    the single-bandwidth GWR fit of ``data`` scored by ``criterion``.

    Returns
    -------
    (bandwidth, criterion value)
    """
    mode = KernelMode(mode)
    if data.N <= data.K + 3:
        raise FitError(f"need N > K + 3 for calibration (N={data.N}, K={data.K})")
    geom = geometry or Geometry(data.coords)
    if objective is None:
        def objective(bw):
            try:
                W = geom.weights(mode, bw)
            except DataError:
                return math.inf
            return score_local_fit(W, data.X, data.y, criterion)

    if mode is KernelMode.FIXED:
        lo, hi = geom.fixed_search_range()
        return golden_section(objective, lo, hi)
    return exhaustive_search(objective, adaptive_search_range(data.N, data.K))


def gwr_fit_at_site(data, weights, return_singular=False):
    """Local estimate ``[X'G X]^-1 X'G y`` for one site's weight vector."""
    w = np.asarray(weights, dtype=float)
    X, y = data.X, data.y
    A = (X.T * w) @ X
    inv, singular = _invert_local(A[None])
    beta = inv[0] @ ((X.T * w) @ y)
    if return_singular:
        return beta, bool(singular[0])
    return beta


def gwr_hat_matrix(W, X):
    """Dense hat matrix; row i is ``x_i' [X'G(s_i)X]^-1 X'G(s_i)``."""
    n, k = X.shape
    outer = (X[:, :, None] * X[:, None, :]).reshape(n, k * k)
    inv, _ = _invert_local((W @ outer).reshape(n, k, k))
    row = np.einsum("ni,nij->nj", X, inv)
    return (row @ X.T) * W


def gwr_trace(W, X):
    """``tr[H_GWR]`` and the singular-site mask for kernel matrix W."""
    n, k = X.shape
    outer = (X[:, :, None] * X[:, None, :]).reshape(n, k * k)
    inv, singular = _invert_local((W @ outer).reshape(n, k, k))
    trace = float(np.sum(np.diagonal(W) * np.einsum("ni,nij,nj->n", X, inv, X)))
    return trace, singular


def gwr_fit(data, spec=None, criterion=Criterion.AICC, mode=KernelMode.FIXED,
            geometry=None):
    """Fit GWR (fixed bandwidth) or GWRa (adaptive).

    Parameters
    ----------
    data : SpatialDataset
    spec : KernelSpec, optional
        Single-bandwidth kernel. When omitted the bandwidth is calibrated
        in ``mode`` by ``criterion``.
    criterion : Criterion
    mode : KernelMode
        Only used when ``spec`` is None.
    geometry : Geometry, optional
        Precomputed distances for ``data.coords``.
    """
    criterion = Criterion(criterion)
    geom = geometry or Geometry(data.coords)
    if spec is None:
        mode = KernelMode(mode)
        bw, score = calibrate_bandwidth(data, mode, criterion, geometry=geom)
        spec = KernelSpec(mode, (bw,))
    else:
        if spec.flexible:
            raise ValueError("gwr_fit takes a single-bandwidth kernel")
        spec.validate_for(data)
        mode, bw, score = spec.mode, spec.bandwidths[0], None

    W = geom.weights(mode, bw)
    res = local_regression(W, data.X, data.y)
    singular = np.flatnonzero(res["singular"]).tolist()
    if len(singular) == data.N:
        raise FitError("every local system is singular")
    fitted = np.einsum("ni,ni->n", data.X, res["B"])
    resid = data.y - fitted
    p_star = float(res["hat_diag"].sum())
    if score is None:
        score = (aicc(float(resid @ resid), p_star, data.N)
                 if criterion is Criterion.AICC
                 else score_local_fit(W, data.X, data.y, criterion))
    tag = ModelTag.GWR if mode is KernelMode.FIXED else ModelTag.GWRA
    return SvcFit(
        B=res["B"], p_star=p_star, fitted=fitted, residuals=resid, model=tag,
        scale_params={"bandwidth": bw, "mode": mode.value,
                      "criterion": criterion.value, "score": score},
        singular_sites=singular,
    )
