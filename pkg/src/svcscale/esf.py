"""Eigenvector spatial filtering with coefficient-specific eigenvector terms.

Candidate regressors are the Hadamard products ``x_k * e_l`` of every
predictor with every Moran eigenvector. Forward selection adds the term
that raises adjusted R-squared the most, one at a time, until nothing
improves it. All columns of ``X`` stay in the model.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import FitError
from .results import ModelTag, SvcFit

COND_LIMIT = 1e12


@dataclass
class EsfSelection:
    selected: list
    coef: np.ndarray
    beta_global: np.ndarray
    gamma: np.ndarray
    adjusted_r2: float
    path: list = field(default_factory=list)


def build_candidates(data, basis):
    """Columns of ``X`` followed by ``x_k * e_l`` for every k, then l.

    Returns the (N, K + K*L) matrix and a label per column: ``(k, None)``
    for global terms and ``(k, l)`` for eigenvector terms.
    """
    if basis.N != data.N:
        raise ValueError(f"basis has {basis.N} rows, data has {data.N}")
    X, E = data.X, basis.E
    prods = [X[:, [k]] * E for k in range(data.K)]
    labels = [(k, None) for k in range(data.K)]
    labels += [(k, l) for k in range(data.K) for l in range(basis.L)]
    return np.hstack([X] + prods), labels


def adjusted_r2(rss, tss, n, p):
    return 1.0 - (rss / (n - p)) / (tss / (n - 1))


def _ols(Z, y):
    coef, _, rank, sv = np.linalg.lstsq(Z, y, rcond=None)
    r = y - Z @ coef
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    return coef, float(r @ r), rank, cond


def forward_select(data, basis):
    """Forward selection of eigenvector terms by adjusted R-squared."""
    y = data.y
    n, K = data.N, data.K
    Z, labels = build_candidates(data, basis)
    tss = float(np.sum((y - y.mean()) ** 2))
    design = list(range(K))
    coef, rss, _, _ = _ols(Z[:, design], y)
    if tss == 0:
        raise FitError("response is constant")
    current = adjusted_r2(rss, tss, n, K)
    path = [current]
    scale = np.sqrt(np.sum(Z * Z, axis=0))
    pool = [j for j in range(K, Z.shape[1]) if scale[j] > 0]

    while pool and len(design) + 1 < n - 1:
        p = len(design) + 1
        best = None
        for j in pool:
            cols = design + [j]
            c_coef, c_rss, rank, cond = _ols(Z[:, cols], y)
            if rank < p or cond > COND_LIMIT:
                continue
            score = adjusted_r2(c_rss, tss, n, p)
            if best is None or score > best[0]:
                best = (score, j, c_coef)
        if best is None or not best[0] > current:
            break
        current, j, coef = best
        design.append(j)
        pool.remove(j)
        path.append(current)

    selected = [labels[j] for j in design[K:]]
    gamma = coef[K:]
    return EsfSelection(selected=selected, coef=coef, beta_global=coef[:K],
                        gamma=gamma, adjusted_r2=current, path=path), Z[:, design]


def esf_surfaces(basis, K, sel):
    B = np.tile(sel.beta_global, (basis.N, 1))
    for (k, l), g in zip(sel.selected, sel.gamma):
        B[:, k] += basis.E[:, l] * g
    return B


def esf_fit(data, basis):
    """Fit the ESF varying-coefficient model.

    ``p_star`` is the number of selected columns, which is the trace of
    the (projection) hat matrix.
    """
    sel, design = forward_select(data, basis)
    B = esf_surfaces(basis, data.K, sel)
    fitted = design @ sel.coef
    resid = data.y - fitted
    return SvcFit(
        B=B, p_star=float(design.shape[1]), fitted=fitted, residuals=resid,
        model=ModelTag.ESF,
        scale_params={"selected": sel.selected, "adjusted_r2": sel.adjusted_r2,
                      "n_eigen_terms": len(sel.selected), "L": basis.L},
    )


def projection_trace(Z):
    """Trace of the hat matrix ``Z (Z'Z)^+ Z'``."""
    if Z.shape[1] == 0:
        return 0.0
    return float(np.einsum("ij,ji->", Z, np.linalg.pinv(Z)))


def forced_selection(K, basis, q):
    """Top ``ceil(q*K*L)`` eigenvector terms ranked by eigenvalue.

    Terms sharing an eigenvector are ordered by predictor index.
    """
    if not 0 <= q <= 1:
        raise ValueError("selection ratio must lie in [0, 1]")
    m = int(np.ceil(q * K * basis.L - 1e-9))
    order = [(k, l) for l in range(basis.L) for k in range(K)]
    return order[:m]


def selection_design(data, basis, selected):
    cols = [data.X] + [data.X[:, [k]] * basis.E[:, [l]] for k, l in selected]
    return np.hstack(cols)
