import math

import numpy as np
import pytest
from scipy import stats

from stochepi.exceptions import EpsilonTooSmallError, FilterFailureError, TuningError
from stochepi.inference import pmmh as pmmh_module
from stochepi.inference.abc import AbcConfig, abc_rejection, distance_floor, observed_summary
from stochepi.inference.mh import (
    Chain,
    Prior,
    Proposal,
    mh_acceptance,
    propose,
    proposal_log_density,
)
from stochepi.inference.pmmh import ParameterMap, pilot_tune, pmmh_run
from stochepi.models import sir_spec
from stochepi.observation import ObservationModel, ObservedSeries

# I = 0 is absorbing, so the hidden state never moves and the filter is exact
FROZEN = sir_spec(80)
FROZEN_INIT = (50, 0, 30)
FROZEN_OBS = ObservedSeries([1.0, 2.0, 3.0, 4.0],
                            np.array([[14, 0, 9], [16, 0, 7], [11, 0, 10], [15, 0, 8]], float),
                            ("S", "I", "R"), integer=True)


# -- mh_acceptance -------------------------------------------------------------

def test_acceptance_closed_forms():
    assert mh_acceptance(-3.0, -3.0) == 1.0
    assert mh_acceptance(-5.0, -3.0) == pytest.approx(math.exp(-2), abs=1e-15)
    assert mh_acceptance(-1.0, -3.0) == 1.0
    assert mh_acceptance(-4.0, -3.0, 1.0) == 1.0
    assert mh_acceptance(-np.inf, 0.0) == 0.0
    assert mh_acceptance(-7.0, -np.inf) == 1.0


def test_acceptance_both_zero_stays_put(caplog):
    assert mh_acceptance(-np.inf, -np.inf) == 0.0
    assert "both" in caplog.text


def test_flat_prior_acceptance_is_likelihood_ratio():
    prior = Prior.flat_positive(2)
    ll_new, ll_old = -10.3, -9.1
    a = mh_acceptance(prior.log_density([1, 2]) + ll_new, prior.log_density([3, 1]) + ll_old)
    assert a == pytest.approx(math.exp(ll_new - ll_old), abs=1e-15)


# -- propose ---------------------------------------------------------------------

def test_proposal_covariance_identity():
    rng = np.random.default_rng(1)
    prop = Proposal(1.0, np.eye(2))
    draws = np.array([propose([0.0, 0.0], prop, rng) for _ in range(100_000)])
    np.testing.assert_allclose(np.cov(draws, rowvar=False), np.eye(2), atol=0.03)


def test_zero_step_returns_current():
    theta = np.array([2.0, 1.0])
    out = propose(theta, Proposal(0.0, np.eye(2)), np.random.default_rng(0))
    np.testing.assert_array_equal(out, theta)


def test_published_covariance_correlates_positively():
    sigma = np.array([[0.00269008, 0.0007161], [0.0007161, 0.00075565]])
    rng = np.random.default_rng(2)
    steps = np.array([propose([2.0, 1.0], Proposal(1.0, sigma), rng) for _ in range(20_000)])
    assert np.corrcoef(steps, rowvar=False)[0, 1] > 0.4


def test_proposal_density_symmetric():
    rng = np.random.default_rng(3)
    sigma = np.array([[2.0, 0.3], [0.3, 0.5]])
    for _ in range(50):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert proposal_log_density(a, b, 0.7, sigma) == pytest.approx(
            proposal_log_density(b, a, 0.7, sigma), abs=1e-12)
    expected = stats.multivariate_normal(b, 0.7 * sigma).logpdf(a)
    assert proposal_log_density(a, b, 0.7, sigma) == pytest.approx(expected, abs=1e-10)


def test_proposal_validation():
    with pytest.raises(ValueError):
        Proposal(1.0, [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        Proposal(-1.0, np.eye(2))
    with pytest.raises(ValueError):
        Proposal(1.0, np.eye(2), mode="adaptive", t0=0)
    with pytest.raises(TuningError):
        propose([0.0, 0.0], Proposal(1.0, [[1.0, 2.0], [2.0, 1.0]]), np.random.default_rng(0))


def test_default_scale():
    assert Proposal.default(2).h == pytest.approx(2.38**2 / 2)


# -- prior / parameter map -------------------------------------------------------

def test_flat_prior_support():
    prior = Prior.flat_positive(3, upper=[np.inf, np.inf, 1.0])
    assert prior.contains([1.0, 2.0, 1.0])
    assert not prior.contains([1.0, 0.0, 0.5])
    assert not prior.contains([1.0, 2.0, 1.01])
    assert prior.log_density([1.0, -1.0, 0.5]) == -np.inf
    with pytest.raises(ValueError):
        prior.sample(np.random.default_rng(0))


def test_uniform_prior_density():
    prior = Prior.uniform([0, 0], [5, 5])
    assert prior.log_density([1, 1]) == pytest.approx(-2 * math.log(5))
    draws = prior.sample(np.random.default_rng(1), 1000)
    assert draws.shape == (1000, 2) and np.all((draws >= 0) & (draws <= 5))


def test_parameter_map():
    pmap = ParameterMap(("beta", "p_obs"), {"gamma": 1.0})
    params, obs = pmap.build([2.0, 0.3], ObservationModel.binomial(0.1))
    assert (params.beta, params.gamma, obs.p_obs) == (2.0, 1.0, 0.3)
    np.testing.assert_array_equal(pmap.upper_bounds(), [np.inf, 1.0])
    with pytest.raises(ValueError):
        ParameterMap(("beta", "beta"))
    with pytest.raises(ValueError):
        ParameterMap(("beta",), {"beta": 1.0})
    with pytest.raises(ValueError):
        ParameterMap(("delta",))


# -- pmmh ------------------------------------------------------------------------

def frozen_run(names, proposal, n_steps, theta0, seed=1, n_particles=1):
    pmap = ParameterMap(names, {k: 1.0 for k in ("beta", "gamma") if k not in names})
    prior = Prior.flat_positive(pmap.dim, pmap.upper_bounds())
    return pmmh_run(FROZEN, ObservationModel.binomial(0.3), FROZEN_OBS, FROZEN_INIT, prior,
                    proposal, n_steps, n_particles, seed, theta0, pmap)


def test_chain_bookkeeping():
    chain = frozen_run(("p_obs",), Proposal(0.01, np.eye(1)), 300, [0.3])
    assert len(chain) == 301
    assert not chain.accepted[0]
    rejected = np.flatnonzero(~chain.accepted[1:]) + 1
    np.testing.assert_array_equal(chain.samples[rejected], chain.samples[rejected - 1])
    assert chain.acceptance_rate == pytest.approx(chain.accepted[1:].mean())
    assert 0 < chain.acceptance_rate < 1


def test_null_move_keeps_state():
    chain = frozen_run(("p_obs",), Proposal(0.0, np.eye(1)), 1, [0.3])
    np.testing.assert_array_equal(chain.samples, [[0.3], [0.3]])
    assert chain.accepted[1]
    assert chain.log_target[0] == chain.log_target[1]


def test_out_of_support_skips_filter(monkeypatch):
    seen = []
    real = pmmh_module.log_likelihood

    def spy(spec, params, obs_model, *args, **kwargs):
        seen.append(obs_model.p_obs)
        return real(spec, params, obs_model, *args, **kwargs)

    monkeypatch.setattr(pmmh_module, "log_likelihood", spy)
    chain = frozen_run(("p_obs",), Proposal(1.0, np.eye(1)), 200, [0.3])
    assert all(0 < p <= 1 for p in seen)
    # most proposals from a unit-variance walk leave (0, 1]
    assert len(seen) < 120
    assert np.all((chain.samples > 0) & (chain.samples <= 1))


def test_zero_density_start_aborts():
    with pytest.raises(FilterFailureError):
        frozen_run(("p_obs",), Proposal(0.01, np.eye(1)), 10, [1.0])


def test_adaptive_schedule_recomputed():
    t0, eps = 50, 1e-4
    chain = frozen_run(("beta", "p_obs"), Proposal(0.01, np.eye(2), "adaptive", t0, eps), 200,
                       [1.0, 0.3])
    covs = chain.proposal_covs
    for t in range(1, 201):
        if t <= t0:
            expected = np.eye(2)
        else:
            expected = np.cov(chain.samples[:t], rowvar=False) + eps * np.eye(2)
        np.testing.assert_allclose(covs[t], expected, rtol=0, atol=1e-10)


def test_fixed_seed_reproducible():
    a = frozen_run(("p_obs",), Proposal(0.01, np.eye(1)), 50, [0.3], seed=4)
    b = frozen_run(("p_obs",), Proposal(0.01, np.eye(1)), 50, [0.3], seed=4)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.log_target, b.log_target)


def test_stationary_distribution_matches_beta_posterior():
    # flat prior on p_obs with binomial counts -> Beta(k + 1, n - k + 1)
    hidden = np.array(FROZEN_INIT)
    k = FROZEN_OBS.values.sum()
    n = len(FROZEN_OBS) * hidden.sum()
    post = stats.beta(k + 1, n - k + 1)
    chain = frozen_run(("p_obs",), Proposal(4 * post.var(), np.eye(1)), 60_000, [0.3], seed=9)
    kept = chain.samples[1000::20, 0]
    edges = post.ppf(np.linspace(0, 1, 11))
    counts, _ = np.histogram(kept, edges)
    m = len(kept)
    sd = math.sqrt(m * 0.1 * 0.9)
    assert np.all(np.abs(counts - 0.1 * m) <= 3 * sd), counts


def test_pilot_flat_likelihood_fails():
    # beta does not affect a frozen state, so every in-support move is accepted
    pmap = ParameterMap(("beta",), {"gamma": 1.0})
    with pytest.raises(TuningError) as err:
        pilot_tune(FROZEN, ObservationModel.binomial(0.3), FROZEN_OBS, FROZEN_INIT,
                   Prior.flat_positive(1), [1.0], pmap, 1, 3, n_pilot=100, window=40)
    assert len(err.value.trace) > 20
    assert all(rate > 0.25 for _, rate in err.value.trace)
    assert err.value.partial is not None


@pytest.mark.slow
def test_pilot_sigma_correlates_on_noisy_data(sir, noisy_data):
    # 300 particles: at 100 the log-likelihood noise keeps the pilot out of its band
    pmap = ParameterMap(("beta", "gamma"))
    try:
        result = pilot_tune(sir, ObservationModel.gaussian(0.01), noisy_data, [4800, 20, 0],
                            Prior.flat_positive(2), [1.5, 0.8], pmap, 300, 11)
    except TuningError as err:
        result = err.partial
    assert result.sigma[0, 1] > 0


def test_pilot_hits_band_on_exact_likelihood():
    pmap = ParameterMap(("p_obs",), {"beta": 1.0, "gamma": 1.0})
    result = pilot_tune(FROZEN, ObservationModel.binomial(0.3), FROZEN_OBS, FROZEN_INIT,
                        Prior.flat_positive(1, [1.0]), [0.3], pmap, 1, 5, n_pilot=1000)
    final = result.trace[-1]
    assert final["stage"] == 2 and final["steps"] == 1000
    assert 0.10 <= final["acceptance"] <= 0.25
    assert result.sigma.shape == (1, 1) and result.sigma[0, 0] > 0


# -- abc -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def abc_setup(sir, noisy_data):
    return sir, Prior.uniform([0, 0], [5, 5]), ("beta", "gamma"), noisy_data


def test_abc_infinite_epsilon_returns_prior(abc_setup):
    spec, prior, names, data = abc_setup
    res = abc_rejection(spec, prior, names, data, AbcConfig(np.inf, 1000), [4800, 20, 0], rng=3)
    assert res.attempts == 1000
    np.testing.assert_array_equal(res.attempt_index, np.arange(1000))
    crit = 1.63 / math.sqrt(1000)
    for j in range(2):
        assert stats.kstest(res.samples[:, j], stats.uniform(0, 5).cdf).statistic < crit


def test_abc_zero_epsilon(abc_setup):
    spec, prior, names, data = abc_setup
    with pytest.raises(EpsilonTooSmallError):
        abc_rejection(spec, prior, names, data, AbcConfig(0.0, 10), [4800, 20, 0], rng=1)
    below = 0.5 * distance_floor(observed_summary(data))
    with pytest.raises(EpsilonTooSmallError):
        abc_rejection(spec, prior, names, data, AbcConfig(below, 10), [4800, 20, 0], rng=1)


def test_abc_exhausted_budget(abc_setup):
    spec, prior, names, data = abc_setup
    with pytest.raises(EpsilonTooSmallError):
        abc_rejection(spec, prior, names, data, AbcConfig(1.0, 10, max_attempts=2000),
                      [4800, 20, 0], rng=1)


def test_abc_accepted_sets_nested(abc_setup):
    spec, prior, names, data = abc_setup
    tight = abc_rejection(spec, prior, names, data, AbcConfig(300.0, 20), [4800, 20, 0], rng=5)
    loose = abc_rejection(spec, prior, names, data, AbcConfig(600.0, 60), [4800, 20, 0], rng=5)
    assert np.all(tight.distances <= 300.0) and np.all(loose.distances <= 600.0)
    horizon = min(tight.attempts, loose.attempts)
    t = set(tight.attempt_index[tight.attempt_index < horizon])
    lo = set(loose.attempt_index[loose.attempt_index < horizon])
    assert t <= lo
    assert t == {a for a, d in zip(loose.attempt_index, loose.distances)
                 if a < horizon and d <= 300.0}


def test_abc_config_validation():
    with pytest.raises(ValueError):
        AbcConfig(float("nan"), 10)
    with pytest.raises(ValueError):
        AbcConfig(1.0, 0)


def test_chain_length_check():
    with pytest.raises(ValueError):
        Chain(("a",), np.zeros((3, 1)), np.zeros(2), np.zeros(3, bool))
