import numpy as np
import pytest

from lab.generators import SwissRollConfig, gen_swiss_roll
from processing.bandwidth import BandwidthChain, McmcConfig
from processing.cv_select import (
    CrossValidator,
    CvConfig,
    cross_validate,
    gp_candidate_fitter,
    mspe,
    select_dimension,
)
from processing.dataset import Dataset
from processing.estimator import FitResult, TruncationLevel
from utils.validators import NumericalError, ValidationError


def _truth(X):
    return np.sin(X[:, 0])


def _fit_from(values_at_query, n_train):
    chain = BandwidthChain(np.ones(1), np.ones(1), 0.0, np.zeros(1))
    return FitResult(np.zeros(n_train), np.asarray(values_at_query, dtype=float), 1,
                     chain.summary(), TruncationLevel(1.0))


def _dataset(n=40, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 2))
    return Dataset(X, _truth(X))


def test_mspe_examples():
    assert mspe([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mspe([1, 2, 3, 4], [0, 1, 2, 3]) == 1.0
    rng = np.random.default_rng(0)
    e, y = rng.standard_normal(9), rng.standard_normal(9)
    assert mspe(e, y) == pytest.approx(sum((a - b) ** 2 for a, b in zip(e, y)) / 9, rel=1e-14)
    with pytest.raises(ValidationError):
        mspe([1.0], [1.0, 2.0])


def test_select_dimension_ties_go_to_smallest():
    assert select_dimension([3.0, 1.0, 1.0, 2.0]) == 2
    assert select_dimension([float("inf"), 0.5]) == 2
    assert select_dimension([0.0]) == 1
    with pytest.raises(NumericalError):
        select_dimension([float("inf"), float("inf")])


def test_config_validation():
    with pytest.raises(ValidationError):
        CvConfig(d_max=0)
    with pytest.raises(ValidationError):
        CvConfig(test_fraction=1.0)
    with pytest.raises(ValidationError):
        CvConfig(n_splits=0)


def test_exact_candidate_wins():
    def fitter(train, test_x, dim, seed):
        values = _truth(test_x) if dim == 2 else _truth(test_x) + 0.1 * dim
        return _fit_from(values, train.n)

    result = CrossValidator(CvConfig(d_max=4, seed=3), fitter).run(_dataset())
    assert result.selected_dim == 2
    assert result.mspe_per_dim[1] == 0.0
    assert result.selected_dim == int(np.argmin(result.mspe_per_dim)) + 1


def test_tied_candidates_select_smallest_dimension():
    def fitter(train, test_x, dim, seed):
        return _fit_from(_truth(test_x) + (0.0 if dim >= 3 else 1.0), train.n)

    result = CrossValidator(CvConfig(d_max=5), fitter).run(_dataset())
    assert result.selected_dim == 3


def test_single_candidate_is_selected():
    def fitter(train, test_x, dim, seed):
        return _fit_from(np.full(len(test_x), 5.0), train.n)

    assert CrossValidator(CvConfig(d_max=1), fitter).run(_dataset()).selected_dim == 1


def test_failed_candidate_scores_infinity():
    def fitter(train, test_x, dim, seed):
        if dim == 1:
            raise NumericalError("Cholesky failed", {"jitter": 1e-6})
        return _fit_from(_truth(test_x) + dim, train.n)

    result = CrossValidator(CvConfig(d_max=3), fitter).run(_dataset())
    assert np.isinf(result.mspe_per_dim[0])
    assert result.selected_dim == 2


def test_every_candidate_failing_raises():
    def fitter(train, test_x, dim, seed):
        raise NumericalError("no")

    with pytest.raises(NumericalError):
        CrossValidator(CvConfig(d_max=2), fitter).run(_dataset())


def test_split_uses_test_fraction_and_holds_out_responses():
    seen = {}

    def fitter(train, test_x, dim, seed):
        seen["n_train"], seen["n_test"] = train.n, len(test_x)
        return _fit_from(np.zeros(len(test_x)), train.n)

    result = CrossValidator(CvConfig(d_max=1, test_fraction=0.25), fitter).run(_dataset(40))
    assert seen == {"n_train": 30, "n_test": 10}
    assert result.split.n_test == 10


def test_averaged_splits_and_refit_all():
    calls = []

    def fitter(train, test_x, dim, seed):
        calls.append((train.n, len(test_x), dim))
        return _fit_from(_truth(test_x) + 0.1 * dim, train.n)

    ds = _dataset(30)
    result = CrossValidator(CvConfig(d_max=2, n_splits=3, refit_all=True), fitter).run(ds)
    assert result.selected_dim == 1
    assert len(calls) == 3 * 2 + 1
    assert calls[-1] == (30, 0, 1)
    assert result.final_fit.estimate_at_train.shape == (30,)


def test_averaging_more_splits_reduces_score_variance():
    def fitter(train, test_x, dim, seed):
        return _fit_from(np.full(len(test_x), train.responses.mean() + 0.1 * dim), train.n)

    rng = np.random.default_rng(11)
    X = rng.uniform(-2, 2, size=(40, 2))
    ds = Dataset(X, _truth(X) + 0.3 * rng.standard_normal(40))

    def scores(n_splits):
        runs = [cross_validate(ds, CvConfig(d_max=2, n_splits=n_splits, seed=master), fitter)
                for master in range(20)]
        return np.array([r.mspe_per_dim for r in runs])

    single, averaged = scores(1), scores(5)
    assert np.all(averaged.var(axis=0) < single.var(axis=0))


def test_deterministic_given_seed():
    def fitter(train, test_x, dim, seed):
        rng = np.random.default_rng(seed + dim)
        return _fit_from(_truth(test_x) + rng.standard_normal(len(test_x)), train.n)

    ds = _dataset()
    r1 = cross_validate(ds, CvConfig(d_max=3, seed=5), fitter)
    r2 = cross_validate(ds, CvConfig(d_max=3, seed=5), fitter)
    np.testing.assert_array_equal(r1.mspe_per_dim, r2.mspe_per_dim)
    assert r1.to_dict()["selected_dim"] == r2.to_dict()["selected_dim"]


def test_gp_candidates_run_end_to_end():
    ds = _dataset(24, seed=1)
    cfg = CvConfig(d_max=2, mcmc=McmcConfig(n_iter=80, burn_in=40, seed=0), thin=10, seed=2)
    result = cross_validate(ds, cfg)
    assert result.mspe_per_dim.shape == (2,)
    assert np.all(np.isfinite(result.mspe_per_dim))
    assert result.selected_dim in (1, 2)
    assert result.final_fit.estimate_at_query.shape == (12,)
    assert list(result.to_dict()) == ["mspe", "selected_dim"]


def test_gp_candidates_pool_size_independent():
    ds = _dataset(20, seed=2)
    mcmc = McmcConfig(n_iter=60, burn_in=30, seed=0)
    serial = cross_validate(ds, CvConfig(d_max=3, mcmc=mcmc, seed=4, workers=1))
    pooled = cross_validate(ds, CvConfig(d_max=3, mcmc=mcmc, seed=4, workers=3))
    np.testing.assert_array_equal(serial.mspe_per_dim, pooled.mspe_per_dim)


@pytest.mark.slow
def test_selected_estimator_is_close_to_true_dimension_estimator():
    mcmc = McmcConfig(n_iter=1000, burn_in=500)
    good = 0
    for rep in range(20):
        data = gen_swiss_roll(SwissRollConfig(n=400, ambient_dim=100, seed=rep))
        cfg = CvConfig(d_max=5, mcmc=mcmc, seed=rep)
        fits = {}
        base = gp_candidate_fitter(cfg)

        def fitter(train, test_x, dim, seed):
            fits[dim] = base(train, test_x, dim, seed)
            return fits[dim]

        result = cross_validate(data.dataset, cfg, fitter)
        f0_test = data.f0_at_points[list(result.split.test_idx)]
        err_cv = mspe(result.final_fit.estimate_at_query, f0_test)
        err_true_dim = mspe(fits[2].estimate_at_query, f0_test)
        good += err_cv <= 1.2 * err_true_dim
    assert good >= 16
