import math

import numpy as np
import pytest

from lab.generators import CircleManifoldConfig, gen_circle_manifold
from processing import two_stage
from processing.bandwidth import BandwidthPrior, McmcConfig
from processing.dataset import Dataset, load_csv, split
from processing.two_stage import (
    EigenmapConfig,
    default_neighbors,
    knn_graph,
    laplacian_eigenmap,
    normalized_laplacian,
    two_stage_fit,
)
from utils.validators import ValidationError


def _isometric_circle(n, ambient=20, seed=0):
    theta = 2 * math.pi * np.arange(n) / n
    basis, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((ambient, 2)))
    return np.column_stack([np.cos(theta), np.sin(theta)]) @ basis.T


def _curve(n, seed=0):
    """Open 1-d curve in R^3 with a simple Laplacian spectrum."""
    t = np.sort(np.random.default_rng(seed).uniform(0, 3, n))
    return np.column_stack([t, np.sin(t), 0.5 * t ** 2])


def _align(A, B):
    """Flip columns of B to match the signs of A."""
    signs = np.sign(np.sum(A * B, axis=0))
    signs[signs == 0] = 1.0
    return B * signs


def test_config_validation():
    with pytest.raises(ValidationError):
        EigenmapConfig(d_tilde=0)
    with pytest.raises(ValidationError):
        EigenmapConfig(n_neighbors=0)
    with pytest.raises(ValidationError):
        EigenmapConfig(heat_bandwidth="gaussian")
    with pytest.raises(ValidationError):
        EigenmapConfig(heat_bandwidth=-1.0)


def test_default_neighbors():
    assert default_neighbors(10) == 5
    assert default_neighbors(1000) == 7


def test_knn_graph_is_symmetric_with_unit_binary_weights():
    X = _curve(30)
    W = knn_graph(X, 3, "binary")
    dense = W.toarray()
    np.testing.assert_array_equal(dense, dense.T)
    assert set(np.unique(dense)) <= {0.0, 1.0}
    assert np.all(np.diag(dense) == 0)
    assert np.all(dense.sum(axis=1) >= 3)


def test_embedding_shapes_and_spectrum():
    emb = laplacian_eigenmap(_curve(60), EigenmapConfig(d_tilde=3))
    assert emb.coords.shape == (60, 3)
    assert emb.eigenvalues.shape == (3,)
    assert np.all(np.diff(emb.eigenvalues) >= 0)
    assert np.all(emb.eigenvalues >= -1e-10)
    assert emb.graph_connected
    assert emb.eigengap >= 0


def test_sign_convention():
    emb = laplacian_eigenmap(_curve(50, seed=1), EigenmapConfig(d_tilde=2))
    idx = np.argmax(np.abs(emb.coords), axis=0)
    assert np.all(emb.coords[idx, [0, 1]] > 0)


def test_eigen_residual():
    X = _curve(80, seed=2)
    cfg = EigenmapConfig(d_tilde=2)
    emb = laplacian_eigenmap(X, cfg)
    L = normalized_laplacian(knn_graph(X, default_neighbors(80), None)).toarray()
    for j in range(2):
        v = emb.coords[:, j]
        assert np.linalg.norm(L @ v - emb.eigenvalues[j] * v) <= 1e-8


def test_isometric_circle_embeds_onto_a_circle():
    emb = laplacian_eigenmap(_isometric_circle(400), EigenmapConfig(d_tilde=2))
    radii = np.linalg.norm(emb.coords, axis=1)
    assert radii.std() / radii.mean() < 0.1


def test_row_permutation_permutes_embedding():
    X = _curve(70, seed=3)
    perm = np.random.default_rng(0).permutation(70)
    cfg = EigenmapConfig(d_tilde=2)
    base = laplacian_eigenmap(X, cfg).coords
    permuted = laplacian_eigenmap(X[perm], cfg).coords
    np.testing.assert_allclose(_align(base[perm], permuted), base[perm], atol=1e-8)


def test_rigid_motion_leaves_embedding_unchanged():
    X = _curve(70, seed=4)
    rot, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((3, 3)))
    cfg = EigenmapConfig(d_tilde=2)
    base = laplacian_eigenmap(X, cfg).coords
    moved = laplacian_eigenmap(X @ rot.T - 2.0, cfg).coords
    np.testing.assert_allclose(_align(base, moved), base, atol=1e-8)


def test_sparse_solver_agrees_with_dense(monkeypatch):
    X = _curve(120, seed=5)
    cfg = EigenmapConfig(d_tilde=2, seed=3)
    dense = laplacian_eigenmap(X, cfg)
    monkeypatch.setattr(two_stage, "DENSE_EIGEN_LIMIT", 10)
    sparse = laplacian_eigenmap(X, cfg)
    np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues, atol=1e-8)
    np.testing.assert_allclose(np.abs(sparse.coords), np.abs(dense.coords), atol=1e-6)


def test_separated_clusters_give_a_disconnected_graph():
    rng = np.random.default_rng(6)
    X = np.vstack([rng.standard_normal((15, 3)), 1000.0 + rng.standard_normal((15, 3))])
    emb = laplacian_eigenmap(X, EigenmapConfig(n_neighbors=4, d_tilde=1, heat_bandwidth="binary"))
    assert not emb.graph_connected
    assert emb.n_components == 2
    # the second zero eigenvalue is the first returned one
    assert abs(emb.eigenvalues[0]) <= 1e-10


def test_tiny_components_are_refused():
    X = np.repeat(np.arange(4.0) * 100.0, 2).reshape(-1, 1)
    X[1::2] += 1.0
    with pytest.raises(ValidationError, match="Increase n_neighbors"):
        laplacian_eigenmap(X, EigenmapConfig(n_neighbors=1, d_tilde=2))


def test_identical_points_have_no_heat_bandwidth():
    with pytest.raises(ValidationError, match="Heat bandwidth is zero"):
        laplacian_eigenmap(np.zeros((10, 3)), EigenmapConfig())


def test_too_few_rows():
    with pytest.raises(ValidationError, match="n > d_tilde"):
        laplacian_eigenmap(_curve(3), EigenmapConfig(d_tilde=2))


def test_embedding_dump(tmp_path):
    emb = laplacian_eigenmap(_curve(25), EigenmapConfig(d_tilde=2))
    path = emb.save_csv(tmp_path / "emb.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "e1,e2"
    assert len(lines) == 26
    back = load_csv(path)
    np.testing.assert_allclose(back.predictors[:, 0], emb.coords[:, 0], rtol=1e-15)
    assert emb.diagnostics()["transductive"] is True


def _circle_task(n, seed):
    return gen_circle_manifold(CircleManifoldConfig(n=n, ambient_dim=20, seed=seed))


def test_two_stage_without_holdout_fits_every_row():
    data = _circle_task(30, seed=1)
    fit, emb = two_stage_fit(data.dataset, EigenmapConfig(d_tilde=2), BandwidthPrior(d=2),
                             McmcConfig(n_iter=100, burn_in=50, seed=0))
    assert fit.estimate_at_train.shape == (30,)
    assert fit.estimate_at_query.shape == (0,)
    assert emb.coords.shape == (30, 2)


def test_holdout_is_transductive_and_ignores_test_responses():
    data = _circle_task(40, seed=2)
    ds = data.dataset
    holdout = split(ds, 0.5, seed=3)
    mcmc = McmcConfig(n_iter=100, burn_in=50, seed=1)
    fit, _ = two_stage_fit(ds, EigenmapConfig(), BandwidthPrior(d=2), mcmc, holdout=holdout)

    y = np.array(ds.responses)
    y[list(holdout.test_idx)] = 100.0
    scrambled = Dataset(ds.predictors, y)
    fit2, _ = two_stage_fit(scrambled, EigenmapConfig(), BandwidthPrior(d=2), mcmc, holdout=holdout)
    assert fit.estimate_at_query.shape == (holdout.n_test,)
    np.testing.assert_array_equal(fit.estimate_at_query, fit2.estimate_at_query)


def test_two_stage_beats_the_mean_predictor():
    data = _circle_task(72, seed=4)
    ds = data.dataset
    holdout = split(ds, 0.5, seed=4)
    mcmc = McmcConfig(n_iter=400, burn_in=200, seed=4)
    fit, _ = two_stage_fit(ds, EigenmapConfig(), BandwidthPrior(d=2), mcmc, holdout=holdout)
    test_y = ds.responses[list(holdout.test_idx)]
    mean_y = ds.responses[list(holdout.train_idx)].mean()
    err = math.sqrt(np.mean((fit.estimate_at_query - test_y) ** 2))
    baseline = math.sqrt(np.mean((mean_y - test_y) ** 2))
    assert math.isfinite(err)
    assert err < baseline
