import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import comb

from stochepi.observation import (
    ObservationModel,
    ObservedSeries,
    log_obs_density,
    simulate_observation,
    simulate_series,
)


def test_binomial_identity_thinning():
    y = simulate_observation(ObservationModel.binomial(1.0), [4800, 20, 0], rng=1)
    np.testing.assert_array_equal(y, [4800, 20, 0])


def test_binomial_mean():
    model = ObservationModel.binomial(0.1, observed=(1,))
    rng = np.random.default_rng(3)
    draws = np.array([simulate_observation(model, [0, 4800, 20], rng)[0] for _ in range(100_000)])
    sd = math.sqrt(4800 * 0.1 * 0.9 / 100_000)
    assert abs(draws.mean() - 480) < 3 * sd


def test_gaussian_variance():
    model = ObservationModel.gaussian(0.01, observed=(0,))
    rng = np.random.default_rng(4)
    hidden = np.array([4800.0, 20.0, 0.0])
    draws = np.array([simulate_observation(model, hidden, rng)[0] for _ in range(100_000)])
    assert abs(draws.var() - 48) < 0.05 * 48


def test_gaussian_floor_on_empty_compartment():
    model = ObservationModel.gaussian(0.01)
    rng = np.random.default_rng(5)
    draws = np.array([simulate_observation(model, [10.0, 0.0, 0.0], rng) for _ in range(20_000)])
    assert abs(draws[:, 2].var() - 0.25) < 0.05 * 0.25


def test_binomial_log_density_closed_form():
    model = ObservationModel.binomial(0.1, observed=(1,))
    expected = math.log(comb(20, 2)) + 2 * math.log(0.1) + 18 * math.log(0.9)
    assert log_obs_density(model, [4800, 20, 0], [2]) == pytest.approx(expected, abs=1e-12)


def test_binomial_out_of_support():
    model = ObservationModel.binomial(0.1, observed=(1,))
    assert log_obs_density(model, [4800, 20, 0], [21]) == -np.inf
    assert log_obs_density(model, [4800, 20, 0], [2.5]) == -np.inf


def test_binomial_p_one_support():
    model = ObservationModel.binomial(1.0)
    assert log_obs_density(model, [3, 2, 1], [3, 2, 1]) == 0.0
    assert log_obs_density(model, [3, 2, 1], [3, 1, 1]) == -np.inf


def test_gaussian_peak_density():
    model = ObservationModel.gaussian(0.01)
    hidden = np.array([4800.0, 20.0, 0.0])
    var = np.maximum(0.01 * hidden, 0.25)
    expected = np.sum(-0.5 * np.log(2 * np.pi * var))
    assert log_obs_density(model, hidden, hidden) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("n", [0, 1, 7, 30])
@pytest.mark.parametrize("p", [0.01, 0.3, 0.9, 1.0])
def test_binomial_normalises(n, p):
    model = ObservationModel.binomial(p, observed=(0,))
    total = sum(math.exp(log_obs_density(model, [n, 0, 0], [k])) for k in range(n + 1))
    assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("x", [0.0, 3.0, 400.0])
def test_gaussian_normalises(x):
    model = ObservationModel.gaussian(0.05, observed=(0,))
    sd = math.sqrt(max(0.05 * x, 0.25))
    total, _ = integrate.quad(lambda y: math.exp(log_obs_density(model, [x, 0, 0], [y])),
                              x - 12 * sd, x + 12 * sd)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_gaussian_entropy_consistency():
    model = ObservationModel.gaussian(0.01, observed=(0,))
    rng = np.random.default_rng(7)
    ll = [log_obs_density(model, [900.0, 0, 0], simulate_observation(model, [900.0, 0, 0], rng))
          for _ in range(20_000)]
    entropy = 0.5 * math.log(2 * math.pi * math.e * 9.0)
    assert abs(-np.mean(ll) - entropy) < 4 * np.std(ll) / math.sqrt(len(ll))


def test_binomial_monotone_in_p():
    rng = np.random.default_rng(8)
    means = []
    for p in (0.01, 0.1, 1.0):
        model = ObservationModel.binomial(p)
        means.append(np.mean([simulate_observation(model, [100, 50, 10], rng).sum()
                              for _ in range(2000)]))
    assert means[0] < means[1] < means[2]


def test_series_skips_initial_time(ode_path):
    series = simulate_series(ObservationModel.binomial(0.1), ode_path, rng=1)
    np.testing.assert_array_equal(series.times, np.arange(1.0, 16.0))
    assert series.columns == ("S", "I", "R")
    assert series.integer
    hidden = np.round(ode_path.states[1:])
    assert np.all(series.values <= hidden)


def test_gaussian_series_is_unrounded(noisy_data):
    assert not noisy_data.integer
    assert np.any(noisy_data.values != np.round(noisy_data.values))


def test_model_validation():
    with pytest.raises(ValueError):
        ObservationModel.gaussian(-0.1)
    with pytest.raises(ValueError):
        ObservationModel.binomial(0.0)
    with pytest.raises(ValueError):
        ObservationModel("gaussian", n_ratio=0.1, p_obs=0.5)
    with pytest.raises(ValueError):
        ObservationModel.gaussian(0.1, variance_floor=0)
    with pytest.raises(ValueError):
        ObservationModel.binomial(0.5, observed=(3,)).observed_index(3)


def test_series_validation_and_truncate():
    s = ObservedSeries([1.0, 2.0, 3.0], np.ones((3, 2)), ("I", "R"))
    assert len(s.truncate(2)) == 2
    with pytest.raises(ValueError):
        s.truncate(0)
    with pytest.raises(ValueError):
        ObservedSeries([1.0, 1.0], np.ones((2, 1)), ("I",))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 200), st.floats(0.001, 1.0), st.integers(0, 2**32))
def test_binomial_draws_within_support(n, p, seed):
    y = simulate_observation(ObservationModel.binomial(p), [n, 0, 0], rng=seed)
    assert 0 <= y[0] <= n
    assert log_obs_density(ObservationModel.binomial(p), [n, 0, 0], y) > -np.inf
