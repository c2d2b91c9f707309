import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from statehawk import hmm_baseline as hb
from statehawk.hmm_baseline import HmmParams


def _random_params(rng, m):
    return HmmParams(rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m), size=m),
                     rng.normal(0, 2, m), rng.uniform(0.2, 2.0, m))


def _brute_path(p, x):
    logB = p.log_emissions(x)
    best, arg = -np.inf, None
    for path in itertools.product(range(p.m), repeat=len(x)):
        s = math.log(p.pi[path[0]]) + logB[0, path[0]]
        for t in range(1, len(x)):
            s += math.log(p.A[path[t - 1], path[t]]) + logB[t, path[t]]
        if s > best + 1e-12:
            best, arg = s, path
    return np.array(arg)


@settings(max_examples=40)
@given(st.integers(1, 8), st.integers(2, 3), st.integers(0, 2**31))
def test_viterbi_matches_brute_force(T, m, seed):
    rng = np.random.default_rng(seed)
    if m ** T > 2000:
        T = 6
    p = _random_params(rng, m)
    x = rng.normal(0, 2, T)
    assert np.array_equal(hb.viterbi(p, x), _brute_path(p, x))


def test_viterbi_limits():
    p = HmmParams(np.array([0.5, 0.5]), np.full((2, 2), 0.5), np.array([-3.0, 3.0]), np.full(2, 1e-6))
    x = np.array([-2.9, 3.1, 0.5, -0.1, 2.0])
    assert hb.viterbi(p, x).tolist() == [0, 1, 1, 0, 1]
    one = HmmParams(np.ones(1), np.ones((1, 1)), np.zeros(1), np.ones(1))
    assert hb.viterbi(one, x).tolist() == [0] * 5


@given(st.integers(1, 30), st.integers(0, 2**31))
def test_scaled_loglik_matches_direct_sum(T, seed):
    rng = np.random.default_rng(seed)
    p = _random_params(rng, 2)
    x = rng.normal(0, 2, T)
    B = np.exp(p.log_emissions(x))
    a = p.pi * B[0]
    for t in range(1, T):
        a = (a @ p.A) * B[t]
    assert abs(hb.log_likelihood(p, x) - math.log(a.sum())) < 1e-8


def _two_cluster_series(rng, T=3000):
    s = np.repeat(rng.integers(0, 2, T // 100), 100)
    return s, np.where(s == 0, -2.0, 2.0) + rng.normal(0, 0.5, s.size)


def test_em_recovers_separated_clusters(rng):
    _, x = _two_cluster_series(rng)
    p = hb.fit_em(x, 2)
    assert np.allclose(np.sort(p.means), [-2, 2], atol=0.05)
    assert np.allclose(p.A.sum(axis=1), 1)
    assert np.all(np.diff(p.loglik_history) >= -1e-9)


def test_em_single_state_is_sample_moments(rng):
    x = rng.normal(1.5, 2.0, 500)
    p = hb.fit_em(x, 1)
    assert p.means[0] == pytest.approx(x.mean(), abs=1e-12)
    assert p.variances[0] == pytest.approx(x.var(), rel=1e-12)


def test_em_variance_floor_and_errors():
    x = np.r_[np.zeros(50), np.ones(50)]
    p = hb.fit_em(x, 2)
    assert np.all(p.variances >= hb.VAR_FLOOR)
    with pytest.raises(ValueError):
        hb.fit_em([1.0, 2.0], 2)


def test_restarts_never_lower_likelihood(rng):
    _, x = _two_cluster_series(rng, 1000)
    base = hb.fit_em(x, 2).loglik_history[-1]
    assert hb.fit_em(x, 2, seed=3, restarts=3).loglik_history[-1] >= base - 1e-9


def test_forecast_rules():
    one = HmmParams(np.ones(1), np.ones((1, 1)), np.array([0.7]), np.ones(1))
    assert hb.forecast_one_step(one, [1.0, -4.0, 2.0]) == pytest.approx(0.7)
    p = HmmParams(np.array([0.5, 0.5]), np.eye(2), np.array([-3.0, 3.0]), np.full(2, 1e-6))
    assert hb.forecast_one_step(p, [2.9, 3.0]) == pytest.approx(3.0)
    path = hb.forecast_path(p, np.array([-3.0, -2.9]))
    assert path.shape == (2,) and path[-1] == pytest.approx(-3.0)


def test_parallel_fit_shapes(rng):
    X = np.stack([_two_cluster_series(rng, 1000)[1] for _ in range(2)], axis=1)
    model = hb.ParallelHMM.fit(X, 2)
    assert model.decode(X).shape == X.shape and model.forecasts(X).shape == X.shape
    round_trip = HmmParams.from_store(model.models[0].to_store())
    assert np.array_equal(round_trip.A, model.models[0].A)
