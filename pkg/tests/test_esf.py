import numpy as np
import pytest

from conftest import random_dataset
from svcscale.eigen import basis_for_coords
from svcscale.esf import (adjusted_r2, build_candidates, esf_fit, forced_selection,
                          forward_select, projection_trace, selection_design)
from svcscale.results import ModelTag
from svcscale.spatial import SpatialDataset


def qr_rss(Z, y):
    Q, _ = np.linalg.qr(Z)
    r = y - Q @ (Q.T @ y)
    return float(r @ r)


def test_candidate_layout(rng):
    d1 = random_dataset(rng, n=20, k=1)
    b = basis_for_coords(d1.coords)
    E = b.E[:, :2]
    from svcscale.eigen import EigenBasis
    b2 = EigenBasis(E, b.lam[:2], b.connectivity_sum)
    Z, labels = build_candidates(d1, b2)
    assert Z.shape == (20, 3)
    assert np.array_equal(Z, np.column_stack([np.ones(20), E]))
    assert labels == [(0, None), (0, 0), (0, 1)]
    d2 = random_dataset(rng, n=20, k=2)
    b3 = EigenBasis(basis_for_coords(d2.coords).E[:, :3], b.lam[:3], 1.0)
    Z, labels = build_candidates(d2, b3)
    assert Z.shape[1] == 8
    assert np.allclose(Z[:, 5], d2.X[:, 1] * b3.E[:, 0])


def test_dimension_mismatch(rng):
    d = random_dataset(rng, n=20)
    b = basis_for_coords(rng.standard_normal((21, 2)))
    with pytest.raises(ValueError):
        build_candidates(d, b)


def test_zero_predictor_terms_never_selected(rng):
    n = 40
    coords = rng.standard_normal((n, 2))
    x1 = rng.standard_normal(n)
    X = np.column_stack([np.ones(n), x1, np.zeros(n)])
    b = basis_for_coords(coords)
    y = 1 + x1 + 2 * b.E[:, 0] + 0.1 * rng.standard_normal(n)
    sel, _ = forward_select(SpatialDataset(coords, X, y), b)
    assert all(k != 2 for k, _ in sel.selected)


def test_noiseless_selects_nothing(rng):
    d = random_dataset(rng, n=50, noise=0.0, beta=[1.0, -2.0, 0.5])
    fit = esf_fit(d, basis_for_coords(d.coords))
    assert fit.scale_params["n_eigen_terms"] == 0
    assert np.allclose(fit.B, [1.0, -2.0, 0.5], atol=1e-10)
    assert fit.p_star == 3
    assert fit.model is ModelTag.ESF


def test_first_step_brute_force(rng):
    n = 60
    d0 = random_dataset(rng, n=n, noise=0.0, beta=[1.0, -2.0, 0.5])
    b = basis_for_coords(d0.coords)
    y = d0.X @ [1.0, -2.0, 0.5] + 1.5 * d0.X[:, 1] * b.E[:, 2]
    d = d0.with_response(y)
    Z, labels = build_candidates(d, b)
    tss = float(np.sum((y - y.mean()) ** 2))
    gains = {labels[j]: adjusted_r2(qr_rss(Z[:, [0, 1, 2, j]], y), tss, n, 4)
             for j in range(3, Z.shape[1])}
    best = max(gains, key=gains.get)
    assert best == (1, 2)
    sel, _ = forward_select(d, b)
    assert sel.selected[0] == (1, 2)
    assert sel.adjusted_r2 == pytest.approx(1.0, abs=1e-12)


def test_selection_path_and_projection(rng):
    d = random_dataset(rng, n=60)
    b = basis_for_coords(d.coords)
    y = d.y + 2 * b.E[:, 0] + d.X[:, 1] * b.E[:, 1]
    d = d.with_response(y)
    sel, design = forward_select(d, b)
    assert np.all(np.diff(sel.path) > 0)
    assert np.linalg.matrix_rank(design) == design.shape[1]
    fit = esf_fit(d, b)
    H = design @ np.linalg.solve(design.T @ design, design.T)
    assert np.trace(H) == pytest.approx(fit.p_star, abs=1e-8)
    assert projection_trace(design) == pytest.approx(fit.p_star, abs=1e-8)
    assert np.allclose(fit.fitted, H @ y, atol=1e-8)
    # surfaces reproduce the fitted values
    assert np.allclose(np.einsum("ni,ni->n", d.X, fit.B), fit.fitted, atol=1e-10)


def test_fitted_invariant_to_column_order(rng):
    d = random_dataset(rng, n=50)
    b = basis_for_coords(d.coords)
    d = d.with_response(d.y + 3 * b.E[:, 0] + 2 * b.E[:, 3])
    sel, design = forward_select(d, b)
    perm = rng.permutation(design.shape[1])
    f1 = design @ np.linalg.lstsq(design, d.y, rcond=None)[0]
    D2 = design[:, perm]
    f2 = D2 @ np.linalg.lstsq(D2, d.y, rcond=None)[0]
    assert np.allclose(f1, f2, atol=1e-10)


def test_forced_selection(rng):
    d = random_dataset(rng, n=40)
    b = basis_for_coords(d.coords)
    for q in (0.0, 0.2, 0.5, 1.0):
        sel = forced_selection(d.K, b, q)
        assert len(sel) == int(np.ceil(q * d.K * b.L - 1e-9))
        Z = selection_design(d, b, sel)
        assert Z.shape[1] == d.K + len(sel)
    assert forced_selection(3, b, 1.0)[:4] == [(0, 0), (1, 0), (2, 0), (0, 1)]
    with pytest.raises(ValueError):
        forced_selection(3, b, 1.5)
