"""Random-effects eigenvector spatial filtering (RE-ESF).

The varying coefficients are ``beta_k 1 + E gamma_k`` with
``gamma_k ~ N(0, sigma^2 sigma_k^2 Lambda(alpha_k))``. Writing
``gamma_k = D_k u_k`` with ``D_k = sigma_k Lambda(alpha_k)^{1/2}`` and
``u_k ~ N(0, sigma^2 I)`` turns the model into a linear mixed model whose
random-effect design is ``Etilde D`` (``D`` block diagonal). All quantities
needed by the restricted likelihood are cross-products of size
``K + K*L``, so evaluating it does not depend on N once they are cached.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lapack
from scipy.optimize import minimize

from .errors import FitError
from .results import ModelTag, SvcFit

LOG_ALPHA_BOUNDS = (-5.0, 5.0)
FATOL = 1e-6
MAX_ITER = 2000


def scale_spectrum(lam, alpha):
    """``(sum(lam) / sum(lam**alpha)) * lam**alpha``; preserves the sum."""
    lam = np.asarray(lam, dtype=float)
    if not (np.isfinite(alpha) and alpha >= 0):
        raise ValueError(f"alpha must be finite and nonnegative, got {alpha}")
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    # computed relative to the largest eigenvalue to keep large alpha finite
    w = (lam / lam.max()) ** alpha
    return lam.sum() * w / w.sum()


@dataclass(frozen=True)
class ReEsfSystem:
    """Cached cross-products plus the current shrinkage ``D``.

    ``d`` is the diagonal of the block-diagonal matrix with blocks
    ``sigma_k * Lambda(alpha_k)^{1/2}``.
    """

    K: int
    L: int
    N: int
    lam: np.ndarray
    XX: np.ndarray
    XE: np.ndarray
    EE: np.ndarray
    Xy: np.ndarray
    Ey: np.ndarray
    yy: float
    # Schur-complement pieces: S = Et' M_X Et, g = Et' e_ols
    S: np.ndarray
    g: np.ndarray
    rss_ols: float
    beta_ols: np.ndarray
    XX_inv_XE: np.ndarray
    logdet_XX: float
    d: np.ndarray = None

    def with_params(self, alpha, sigma):
        return replace(self, d=shrinkage_diagonal(self.lam, alpha, sigma))

    def bordered_matrix(self):
        """The ``(K + KL)`` square coefficient matrix of the mixed-model
        equations."""
        d = self._d()
        K = self.K
        P = np.empty((K + self.K * self.L,) * 2)
        P[:K, :K] = self.XX
        P[:K, K:] = self.XE * d
        P[K:, :K] = P[:K, K:].T
        P[K:, K:] = d[:, None] * self.EE * d[None, :]
        P[K:, K:] += np.eye(self.K * self.L)
        return P

    def rhs(self):
        return np.concatenate([self.Xy, self._d() * self.Ey])

    def _d(self):
        if self.d is None:
            raise ValueError("shrinkage parameters not set; call with_params")
        return self.d


def shrinkage_diagonal(lam, alpha, sigma):
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if alpha.shape != sigma.shape:
        raise ValueError("alpha and sigma must have one entry per coefficient")
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    return np.concatenate([s * np.sqrt(scale_spectrum(lam, a))
                           for a, s in zip(alpha, sigma)])


def _fast_diagonal(lam_sum, log_rel, alpha, sigma):
    """Vectorized :func:`shrinkage_diagonal` for the optimizer loop;
    ``log_rel = log(lam / max(lam))``."""
    w = np.exp(alpha[:, None] * log_rel[None, :])
    w *= lam_sum / w.sum(axis=1, keepdims=True)
    return (sigma[:, None] * np.sqrt(w)).ravel()


def expanded_basis(X, E):
    """``[x_1 * E, ..., x_K * E]``."""
    return np.hstack([X[:, [k]] * E for k in range(X.shape[1])])


def build_system(data, basis):
    if basis.L < 1:
        raise FitError("RE-ESF needs at least one positive-eigenvalue eigenvector")
    if basis.N != data.N:
        raise ValueError("basis and data disagree on N")
    X, y = data.X, data.y
    Et = expanded_basis(X, basis.E)
    XX = X.T @ X
    XE = X.T @ Et
    EE = Et.T @ Et
    Xy = X.T @ y
    Ey = Et.T @ y
    try:
        cf = cho_factor(XX)
    except np.linalg.LinAlgError as exc:
        raise FitError("X'X is singular") from exc
    beta_ols = cho_solve(cf, Xy)
    e = y - X @ beta_ols
    XX_inv_XE = cho_solve(cf, XE)
    S = EE - XE.T @ XX_inv_XE
    return ReEsfSystem(
        K=data.K, L=basis.L, N=data.N, lam=basis.lam.copy(), XX=XX, XE=XE,
        EE=EE, Xy=Xy, Ey=Ey, yy=float(y @ y), S=(S + S.T) / 2, g=Et.T @ e,
        rss_ols=float(e @ e), beta_ols=beta_ols, XX_inv_XE=XX_inv_XE,
        logdet_XX=2.0 * float(np.sum(np.log(np.diag(cf[0])))),
    )


def reesf_solve(system):
    """Best linear unbiased estimates ``(beta, u)`` from the bordered
    mixed-model equations."""
    P = system.bordered_matrix()
    try:
        sol = np.linalg.solve(P, system.rhs())
    except np.linalg.LinAlgError as exc:
        raise FitError("bordered mixed-model system is singular") from exc
    return sol[:system.K], sol[system.K:]


def _schur_terms(system, d):
    """Log-determinant, quadratic form and ``u`` via the Schur complement
    ``I + D S D`` of ``X'X`` in the bordered matrix."""
    A = d[:, None] * system.S * d[None, :]
    A[np.diag_indices_from(A)] += 1.0
    cf = cho_factor(A, lower=True, check_finite=False)
    dg = d * system.g
    u = cho_solve(cf, dg, check_finite=False)
    logdet = system.logdet_XX + 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    quad = system.rss_ols - float(dg @ u)
    return logdet, quad, u, cf


QUAD_RTOL = 1e-20


def _loglik_from(logdet, quad, n, k, yy):
    # residual energy below rounding level of y'y counts as an exact fit
    quad = max(quad, QUAD_RTOL * yy, np.finfo(float).tiny)
    m = n - k
    return -0.5 * logdet - 0.5 * m * (1.0 + math.log(2.0 * math.pi / m * quad))


def restricted_loglik(system):
    """Restricted log-likelihood at the system's current shrinkage.

    ``-1/2 log|P| - (N-K)/2 [1 + log(2 pi / (N-K) * (e'e + u'u))]`` with
    ``P`` the bordered matrix. Computed from cached cross-products only.
    """
    try:
        logdet, quad, _, _ = _schur_terms(system, system._d())
    except np.linalg.LinAlgError as exc:
        raise FitError("bordered matrix is not positive definite") from exc
    return _loglik_from(logdet, quad, system.N, system.K, system.yy)


def effective_parameters(system):
    """Trace of the RE-ESF hat matrix.

    Equals ``K + KL - tr[(I + D S D)^-1]`` since the lower-right block of
    the inverse bordered matrix is the inverse Schur complement.
    """
    d = system._d()
    A = d[:, None] * system.S * d[None, :]
    A[np.diag_indices_from(A)] += 1.0
    cf = cho_factor(A, lower=True)
    inv_diag = np.diag(cho_solve(cf, np.eye(len(d))))
    return float(system.K + len(d) - inv_diag.sum())


def hat_matrix(X, Et, d):
    """Dense hat matrix ``[X EtD] P^-1 [X EtD]'``; for verification."""
    Z = np.hstack([X, Et * d])
    P = Z.T @ Z
    P[X.shape[1]:, X.shape[1]:] += np.eye(len(d))
    return Z @ np.linalg.solve(P, Z.T)


def _unpack(theta, K):
    return np.exp(theta[:K]), np.exp(theta[K:])


def reesf_fit(data, basis, max_iter=MAX_ITER, fatol=FATOL):
    """Fit RE-ESF by maximising the restricted likelihood.

    The search runs over ``(log alpha_k, log sigma_k)`` with a bounded
    Nelder-Mead simplex started at ``alpha_k = 1`` and
    ``sigma_k = 0.1 * sd(y)``.
    """
    system = build_system(data, basis)
    K = data.K
    sd = float(np.std(data.y))
    x0 = np.concatenate([np.zeros(K), np.full(K, math.log(0.1 * sd if sd > 0 else 0.1))])
    bounds = [LOG_ALPHA_BOUNDS] * K + [(None, None)] * K

    lam_sum = float(system.lam.sum())
    log_rel = np.log(system.lam / system.lam.max())
    S, g = system.S, system.g
    eye = np.eye(S.shape[0])

    def negll(theta):
        alpha, sigma = _unpack(theta, K)
        d = _fast_diagonal(lam_sum, log_rel, alpha, sigma)
        A = d[:, None] * S * d[None, :] + eye
        R, info = lapack.dpotrf(A, lower=1)
        if info != 0:
            return math.inf
        # ||R^-1 dg||^2 = dg' A^-1 dg
        z, _ = lapack.dtrtrs(R, d * g, lower=1)
        logdet = system.logdet_XX + 2.0 * float(np.log(R.diagonal()).sum())
        return -_loglik_from(logdet, system.rss_ols - float(z @ z), system.N, K,
                             system.yy)

    simplex = np.vstack([x0] + [x0 + 0.5 * np.eye(2 * K)[i] for i in range(2 * K)])
    res = minimize(negll, x0, method="Nelder-Mead", bounds=bounds,
                   options={"initial_simplex": simplex, "fatol": fatol,
                            "xatol": np.inf, "maxiter": max_iter})
    alpha, sigma = _unpack(res.x, K)
    fitted_sys = system.with_params(alpha, sigma)
    beta, u = reesf_solve(fitted_sys)
    d = fitted_sys.d
    gamma = (d * u).reshape(K, basis.L)
    B = beta[None, :] + basis.E @ gamma.T
    fitted = np.einsum("ni,ni->n", data.X, B)
    resid = data.y - fitted
    logdet, quad, _, _ = _schur_terms(fitted_sys, d)
    return SvcFit(
        B=B, p_star=effective_parameters(fitted_sys), fitted=fitted,
        residuals=resid, model=ModelTag.REESF,
        scale_params={"alpha": alpha.tolist(), "sigma_gamma": sigma.tolist(),
                      "sigma": math.sqrt(max(quad, 0.0) / (data.N - K)),
                      "loglik": -float(res.fun), "n_eval": int(res.nfev),
                      "L": basis.L},
        converged=bool(res.success),
    )
