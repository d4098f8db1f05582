import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from processing.bandwidth import BandwidthChain, BandwidthPrior, McmcConfig, run_chain
from processing.dataset import Dataset
from processing.estimator import (
    TruncationLevel,
    estimate,
    evaluate,
    iter_function_draws,
    truncate,
)
from processing.kernel_gp import fit_gp, posterior
from utils.validators import ValidationError


def _fixed_chain(a, length, noise_var=0.01, scaling="none"):
    return BandwidthChain(
        draws_a=np.full(length, float(a)),
        draws_noise_var=np.full(length, float(noise_var)),
        accept_rate=0.0,
        log_marglik_trace=np.zeros(length),
        response_scaling=scaling,
    )


def _sine(n, noise_sd=0.1, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 2 * math.pi, n))
    f0 = np.sin(x)
    return Dataset(x.reshape(-1, 1), f0 + noise_sd * rng.standard_normal(n)), f0


def test_truncate_examples():
    assert truncate(3.0, 1.0) == 1.0
    assert truncate(-2.0, 1.0) == -1.0
    assert truncate(0.5, 1.0) == 0.5
    np.testing.assert_array_equal(truncate(np.array([-3.0, 0.2, 9.0]), 2.0), [-2.0, 0.2, 2.0])
    with pytest.raises(ValidationError):
        truncate(1.0, 0.0)


@given(v=st.floats(-1e9, 1e9), tau=st.floats(1e-6, 1e6))
def test_truncate_stays_in_range_and_is_idempotent(v, tau):
    t = truncate(v, tau)
    assert -tau <= t <= tau
    assert truncate(t, tau) == t
    if abs(v) <= tau:
        assert t == v


def test_truncation_level_default_is_twice_max_abs_response():
    assert TruncationLevel.from_responses(np.array([1.0, -3.0, 2.0])).tau == 6.0
    assert TruncationLevel.from_responses(np.zeros(3)).tau == 1.0
    with pytest.raises(ValidationError):
        TruncationLevel(-1.0)


def test_estimate_converges_to_conjugate_posterior_mean():
    ds, _ = _sine(8, seed=1)
    Q = np.array([[0.5], [2.0], [4.0]])
    a, nv = 0.8, 0.05
    fit = estimate(ds, _fixed_chain(a, 1, nv), Q, TruncationLevel(1e9), draws_per_a=10_000, thin=1, seed=3)
    mean, cov = posterior(fit_gp(ds, a, nv), Q)
    se = np.sqrt(np.diag(cov) / 10_000)
    assert np.all(np.abs(fit.estimate_at_query - mean) <= 4 * se)
    assert fit.n_function_draws == 10_000


def test_constant_response_is_recovered():
    X = np.linspace(-1, 1, 10).reshape(-1, 1)
    ds = Dataset(X, np.full(10, 0.7))
    fit = estimate(ds, _fixed_chain(1.0, 50, 1e-4), None, TruncationLevel(5.0), thin=1, seed=0)
    assert np.max(np.abs(fit.estimate_at_train - 0.7)) < 0.05


def test_constant_response_is_recovered_with_standardized_scaling():
    X = np.linspace(-1, 1, 10).reshape(-1, 1)
    ds = Dataset(X, np.full(10, 70.0))
    fit = estimate(ds, _fixed_chain(1.0, 50, 1e-4, scaling="standardize"), None,
                   TruncationLevel(200.0), thin=1, seed=0)
    assert np.max(np.abs(fit.estimate_at_train - 70.0)) < 0.05


def test_truncation_never_moves_a_sample_away_from_the_truth():
    ds, f0 = _sine(25, seed=2)
    chain = run_chain(ds, BandwidthPrior(), McmcConfig(n_iter=200, burn_in=100, seed=2))
    tau = float(np.max(np.abs(f0)))
    Q = np.linspace(0, 2 * math.pi, 7).reshape(-1, 1)
    truth = np.concatenate([f0, np.sin(Q[:, 0])])
    n_checked = 0
    for _, samples in iter_function_draws(ds, chain, Q, draws_per_a=3, thin=5, seed=4):
        truncated = truncate(samples, tau)
        assert np.all(np.abs(truncated - truth) <= np.abs(samples - truth))
        n_checked += samples.shape[0]
    assert n_checked == 3 * len(range(0, len(chain), 5))


def test_estimates_stay_within_tau():
    ds, _ = _sine(20, seed=3)
    chain = run_chain(ds, BandwidthPrior(), McmcConfig(n_iter=100, burn_in=50, seed=3))
    tau = TruncationLevel(0.4)
    fit = estimate(ds, chain, np.array([[1.0], [3.0]]), tau, thin=5, seed=1)
    assert np.all(np.abs(fit.estimate_at_train) <= 0.4)
    assert np.all(np.abs(fit.estimate_at_query) <= 0.4)


def test_average_of_truncated_draws_is_not_truncated_average():
    ds, _ = _sine(15, seed=4)
    chain = _fixed_chain(0.7, 20, 0.05)
    tau = TruncationLevel(0.5)
    fit = estimate(ds, chain, None, tau, draws_per_a=2, thin=1, seed=8)
    draws = np.vstack([s for _, s in iter_function_draws(ds, chain, np.zeros((0, 1)),
                                                         draws_per_a=2, thin=1, seed=8)])
    np.testing.assert_allclose(fit.estimate_at_train, truncate(draws, 0.5).mean(axis=0), rtol=0, atol=1e-12)
    assert np.max(np.abs(fit.estimate_at_train - truncate(draws.mean(axis=0), 0.5))) > 1e-6


def test_estimate_is_deterministic_and_pool_size_independent():
    ds, _ = _sine(20, seed=5)
    chain = run_chain(ds, BandwidthPrior(), McmcConfig(n_iter=100, burn_in=50, seed=5))
    Q = np.array([[1.5]])
    tau = TruncationLevel.from_responses(ds.responses)
    serial = estimate(ds, chain, Q, tau, thin=5, seed=7, workers=1)
    pooled = estimate(ds, chain, Q, tau, thin=5, seed=7, workers=3)
    again = estimate(ds, chain, Q, tau, thin=5, seed=7, workers=1)
    np.testing.assert_array_equal(serial.estimate_at_train, pooled.estimate_at_train)
    np.testing.assert_array_equal(serial.estimate_at_query, pooled.estimate_at_query)
    np.testing.assert_array_equal(serial.estimate_at_query, again.estimate_at_query)


def test_query_permutation_permutes_estimates_in_the_limit():
    ds, _ = _sine(10, seed=6)
    Q = np.array([[0.3], [1.9], [5.1]])
    perm = [2, 0, 1]
    chain = _fixed_chain(0.8, 1, 0.05)
    tau = TruncationLevel(1e9)
    f1 = estimate(ds, chain, Q, tau, draws_per_a=8000, thin=1, seed=0)
    f2 = estimate(ds, chain, Q[perm], tau, draws_per_a=8000, thin=1, seed=1)
    np.testing.assert_allclose(f1.estimate_at_query[perm], f2.estimate_at_query, atol=0.05)


def test_estimate_errors():
    ds, _ = _sine(6)
    empty = _fixed_chain(1.0, 0)
    with pytest.raises(ValidationError, match="empty"):
        estimate(ds, empty, None, TruncationLevel(1.0))
    with pytest.raises(ValidationError):
        estimate(ds, _fixed_chain(1.0, 3), np.zeros((2, 3)), TruncationLevel(1.0))


def test_fit_result_json_keys():
    ds, _ = _sine(6)
    fit = estimate(ds, _fixed_chain(1.0, 3), np.array([[0.1]]), TruncationLevel(2.0), thin=1)
    doc = json.loads(fit.to_json())
    assert list(doc) == ["estimate_train", "estimate_query", "chain", "n_function_draws", "tau"]
    assert set(doc["chain"]) == {"mean_a", "sd_a", "accept_rate"}
    assert doc["tau"] == 2.0


def test_evaluate_examples():
    ds, _ = _sine(6)
    fit = estimate(ds, _fixed_chain(1.0, 3), np.array([[0.1]]), TruncationLevel(2.0), thin=1)
    assert evaluate(fit, fit.estimate_at_train).value == 0.0
    assert evaluate(fit, fit.estimate_at_train - 0.1).value == pytest.approx(0.1, abs=1e-12)
    rng = np.random.default_rng(0)
    truth = rng.standard_normal(7)
    both = np.concatenate([fit.estimate_at_train, fit.estimate_at_query])
    assert evaluate(fit, truth, points="all").value == pytest.approx(
        math.sqrt(np.mean((both - truth) ** 2)), rel=1e-14)
    with pytest.raises(ValidationError):
        evaluate(fit, truth[:3])
    with pytest.raises(ValidationError):
        evaluate(fit, truth, points="everywhere")


@pytest.mark.slow
def test_error_shrinks_with_sample_size():
    medians = []
    for n in (25, 50, 100, 200):
        errors = []
        for rep in range(10):
            ds, f0 = _sine(n, seed=1000 * n + rep)
            chain = run_chain(ds, BandwidthPrior(), McmcConfig(n_iter=600, burn_in=300, seed=rep))
            fit = estimate(ds, chain, None, TruncationLevel.from_responses(ds.responses), thin=10, seed=rep)
            errors.append(evaluate(fit, f0).value)
        medians.append(float(np.median(errors)))
    inversions = [(a, b) for a, b in zip(medians, medians[1:]) if b > a]
    assert len(inversions) <= 1
    assert all(b <= 1.1 * a for a, b in inversions)
