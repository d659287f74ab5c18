import math

import numpy as np
import pytest

from svcscale.spatial import SpatialDataset


def random_dataset(rng, n=40, k=3, noise=1.0, beta=None):
    coords = rng.standard_normal((n, 2))
    X = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
    beta = np.arange(1.0, k + 1) if beta is None else np.asarray(beta, dtype=float)
    y = X @ beta + noise * rng.standard_normal(n)
    return SpatialDataset(coords, X, y)


def ols(X, y):
    return np.linalg.lstsq(X, y, rcond=None)[0]


def gls_oracle(X, Et, d, y):
    """GLS fixed effects and conditional-mean random effects."""
    V = (Et * d) @ (Et * d).T + np.eye(len(y))
    Vi = np.linalg.inv(V)
    beta = np.linalg.solve(X.T @ Vi @ X, X.T @ Vi @ y)
    u = d * (Et.T @ Vi @ (y - X @ beta))
    return beta, u


def reml_oracle(X, Et, d, y):
    """Profiled restricted log-likelihood built from the marginal covariance."""
    n, k = X.shape
    V = (Et * d) @ (Et * d).T + np.eye(n)
    Vi = np.linalg.inv(V)
    XViX = X.T @ Vi @ X
    beta = np.linalg.solve(XViX, X.T @ Vi @ y)
    r = y - X @ beta
    q = r @ Vi @ r
    m = n - k
    return (-0.5 * (np.linalg.slogdet(V)[1] + np.linalg.slogdet(XViX)[1])
            - 0.5 * m * (1 + math.log(2 * math.pi * q / m)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance bookkeeping: criterion -> list of (check, ok, detail)
ACCEPTANCE = {}


def record(criterion, check, ok, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        failed = [f"{name} ({detail})" for name, ok, detail in checks if not ok]
        tail = f": {'; '.join(failed)}" if failed else ""
        tr.write_line(f"criterion {crit}: {status} [{len(checks)} check{'s' * (len(checks) != 1)}]{tail}")
