import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svcscale.eigen import (basis_for_coords, centered, exponential_connectivity,
                            moran_coefficient, moran_eigenbasis, mst_range)
from svcscale.errors import DataError
from svcscale.spatial import distance_matrix, proximity_matrix


def random_connectivity(rng, n):
    coords = rng.standard_normal((n, 2))
    return proximity_matrix(distance_matrix(coords), rng.uniform(0.2, 2.0))


def prim_longest_edge(D):
    n = len(D)
    seen = [0]
    best = D[0].copy()
    longest = 0.0
    for _ in range(n - 1):
        cand = [(best[j], j) for j in range(n) if j not in seen]
        w, j = min(cand)
        longest = max(longest, w)
        seen.append(j)
        best = np.minimum(best, D[j])
    return longest


def test_basis_invariants(rng):
    C = random_connectivity(rng, 40)
    b = moran_eigenbasis(C)
    assert np.allclose(b.E.T @ b.E, np.eye(b.L), atol=1e-10)
    assert np.allclose(b.E.sum(axis=0), 0, atol=1e-10)
    assert np.all(b.lam > 0) and np.all(np.diff(b.lam) <= 0)
    assert b.connectivity_sum == pytest.approx(C.C.sum())


def test_moran_of_eigenvectors(rng):
    C = random_connectivity(rng, 30)
    b = moran_eigenbasis(C)
    n = 30
    for l in range(b.L):
        assert moran_coefficient(b.E[:, l], C) == pytest.approx(
            n / C.C.sum() * b.lam[l], abs=1e-10)


def test_trace_identity(rng):
    C = random_connectivity(rng, 25)
    MCM = centered(C)
    # zero diagonal: tr(MCM) = tr(CM) = -1'C1 / N
    assert np.trace(MCM) == pytest.approx(-C.C.sum() / 25, abs=1e-10)
    assert np.linalg.eigvalsh(MCM).sum() == pytest.approx(-C.C.sum() / 25, abs=1e-8)


def test_two_by_two_hand_oracle():
    c = 0.7
    C = np.array([[0, c], [c, 0]])
    MCM = centered(C)
    assert np.allclose(MCM, c / 2 * np.array([[-1, 1], [1, -1]]))
    assert np.allclose(np.sort(np.linalg.eigvalsh(MCM)), [-c, 0], atol=1e-15)
    assert moran_eigenbasis(C).L == 0


def test_reconstruction_leaves_no_positive_part(rng):
    C = random_connectivity(rng, 35)
    b = moran_eigenbasis(C)
    rest = centered(C) - b.E @ np.diag(b.lam) @ b.E.T
    ev = np.linalg.eigvalsh((rest + rest.T) / 2)
    assert ev.max() <= 1e-9 * b.lam.max()


def test_eigenvalue_order_matches_moran_order(rng):
    C = random_connectivity(rng, 30)
    b = moran_eigenbasis(C)
    mc = [moran_coefficient(b.E[:, l], C) for l in range(b.L)]
    assert np.all(np.diff(mc) <= 1e-12)


def test_sign_convention(rng):
    b = moran_eigenbasis(random_connectivity(rng, 20))
    idx = np.abs(b.E).argmax(axis=0)
    assert np.all(b.E[idx, np.arange(b.L)] > 0)


def test_moran_expectation_under_independence(rng):
    C = random_connectivity(rng, 30)
    draws = [moran_coefficient(rng.standard_normal(30), C) for _ in range(4000)]
    se = np.std(draws) / np.sqrt(len(draws))
    assert abs(np.mean(draws) + 1 / 29) < 4 * se


def test_moran_errors(rng):
    C = random_connectivity(rng, 10)
    with pytest.raises(ValueError):
        moran_coefficient(np.ones(10), C)
    with pytest.raises(ValueError):
        moran_coefficient(rng.standard_normal(10), np.zeros((10, 10)))


def test_rejects_bad_connectivity(rng):
    coords = rng.standard_normal((8, 2))
    with pytest.raises(ValueError):
        moran_eigenbasis(proximity_matrix(distance_matrix(coords), 1.0, row_standardize=True))
    A = rng.uniform(size=(5, 5))
    np.fill_diagonal(A, 0)
    with pytest.raises(ValueError):
        moran_eigenbasis(A)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 25), st.integers(0, 10_000))
def test_mst_range_matches_prim(n, seed):
    D = distance_matrix(np.random.default_rng(seed).standard_normal((n, 2)))
    assert mst_range(D) == pytest.approx(prim_longest_edge(D), rel=1e-12)


def test_mst_range_coincident_sites():
    with pytest.raises(DataError):
        mst_range(np.zeros((3, 3)))


def test_default_connectivity_uses_mst_range(rng):
    coords = rng.standard_normal((20, 2))
    C, r = exponential_connectivity(coords)
    D = distance_matrix(coords)
    assert r == pytest.approx(prim_longest_edge(D))
    assert C.C[0, 1] == pytest.approx(np.exp(-D[0, 1] / r))
    b = basis_for_coords(coords)
    assert b.connectivity_range == r


def test_permutation_invariance(rng):
    coords = rng.standard_normal((30, 2))
    perm = rng.permutation(30)
    a = basis_for_coords(coords)
    b = basis_for_coords(coords[perm])
    assert np.allclose(a.lam, b.lam, atol=1e-10)
