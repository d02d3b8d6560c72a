"""Estimator-style front ends for the samplers.

:class:`PMMHSampler` and :class:`ABCSampler` follow the scikit-learn
conventions: hyper-parameters are plain ``__init__`` arguments exposed by
``get_params``/``set_params``, ``fit`` takes the observed series and stores
results in trailing-underscore attributes, and ``predict`` returns
posterior-predictive quantile bands on a time grid.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _rng
from .diagnostics import burn_thin, summarize, trajectory_bands
from .exceptions import TuningError
from .inference.abc import AbcConfig, abc_rejection
from .inference.mh import Prior, Proposal
from .inference.pmmh import ParameterMap, pilot_tune, pmmh_run
from .models import make_spec
from .observation import ObservationModel, ObservedSeries

logger = logging.getLogger(__name__)


def check_observed(X, columns=None):
    """Validate observed data and return an :class:`ObservedSeries`.

    ``X`` is either an ``ObservedSeries`` or a 2-d array whose first column
    holds the observation times and whose remaining columns hold values in
    ``columns`` order.
    """
    if isinstance(X, ObservedSeries):
        series = X
    else:
        arr = np.asarray(X, dtype=float)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise ValueError("expected a 2-d array: time column followed by observed columns")
        if columns is None or len(columns) != arr.shape[1] - 1:
            raise ValueError("columns must name every observed column")
        series = ObservedSeries(arr[:, 0], arr[:, 1:], tuple(columns))
    if len(series) == 0:
        raise ValueError("no observations")
    if not np.all(np.isfinite(series.values)):
        raise ValueError("observed values must be finite")
    return series


def build_observation_model(obs, p_obs, n_ratio, variance_floor):
    if obs == "gaussian":
        return ObservationModel.gaussian(n_ratio, variance_floor)
    if obs == "binomial":
        return ObservationModel.binomial(p_obs)
    raise ValueError(f"unknown observation kind {obs!r}")


def _run_chain(job):
    """One PMMH chain; module level so worker processes can unpickle it."""
    return pmmh_run(*job)


def run_chains(jobs, n_jobs=1):
    """Run chain jobs in order; with ``n_jobs > 1`` in worker processes.

    Each chain owns its seed, so the results do not depend on ``n_jobs``.
    """
    if n_jobs <= 1 or len(jobs) == 1:
        return [_run_chain(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
        return list(pool.map(_run_chain, jobs))


class _Sampler(BaseEstimator):

    def _spec(self):
        return make_spec(self.model, self.population)

    def _init(self, spec):
        init = np.asarray(self.init, dtype=float)
        spec.check_state(init)
        return init

    def predict(self, t_grid, n_draws=200, random_state=None):
        """Posterior-predictive 2.5/50/97.5% bands, shape ``(T, C, 3)``."""
        check_is_fitted(self, "posterior_")
        seed = _rng.child_seed(self._master_seed(random_state), "bands")
        return trajectory_bands(self._spec(), self.posterior_, self.names_, self._init(self._spec()),
                                t_grid, n_draws, seed, self._fixed())

    def _master_seed(self, override=None):
        rs = self.random_state if override is None else override
        return _rng.as_seed(rs if rs is not None else 0)


class PMMHSampler(_Sampler):
    """Particle-marginal Metropolis-Hastings over epidemic rates.

    Parameters
    ----------
    model : {"sir", "seir"}
    population : int
    init : array_like
        Initial counts, known exactly.
    params : tuple of str
        Sampled parameters, e.g. ``("beta", "gamma")`` or with ``"p_obs"``.
    fixed : dict, optional
        Values of model parameters that are not sampled.
    obs : {"gaussian", "binomial"}
    n_ratio, variance_floor : float
        Gaussian noise settings.
    p_obs : float
        Reporting probability; a starting value when ``"p_obs"`` is sampled.
    theta0 : array_like
        Starting point of the pilot (or of the chains without a pilot).
    n_chains, n_steps, n_particles, burn, thin : int
    pilot : bool
        Tune ``h`` and ``sigma`` by the two-stage pilot before the chains.
    on_tuning_failure : {"raise", "continue"}
        With ``"continue"`` a failed pilot hands its best setting to the
        chains and records the failure in ``tuning_``.
    h, sigma
        Proposal scale and covariance when there is no pilot.  In adaptive
        mode ``h`` is required and ``sigma`` is ignored.
    adaptive : bool
    t0, epsilon
        Adaptive schedule settings.
    prior_upper : array_like, optional
        Upper bounds of the flat prior (``p_obs`` is always capped at 1).
    n_jobs : int
        Worker processes for the chains.
    random_state : int or None
        Master seed.
    """

    def __init__(self, model="sir", population=4820, init=(4800, 20, 0), params=("beta", "gamma"),
                 fixed=None, obs="gaussian", n_ratio=0.01, variance_floor=0.25, p_obs=None,
                 theta0=None, n_chains=3, n_steps=5000, n_particles=100, burn=1000, thin=10,
                 pilot=True, target_rate=(0.10, 0.25), n_pilot=1000, pilot_window=100,
                 max_adjust=20, on_tuning_failure="raise", h=None, sigma=None, adaptive=False,
                 t0=1000, epsilon=1e-4, prior_upper=None, n_jobs=1, random_state=None):
        self.model = model
        self.population = population
        self.init = init
        self.params = params
        self.fixed = fixed
        self.obs = obs
        self.n_ratio = n_ratio
        self.variance_floor = variance_floor
        self.p_obs = p_obs
        self.theta0 = theta0
        self.n_chains = n_chains
        self.n_steps = n_steps
        self.n_particles = n_particles
        self.burn = burn
        self.thin = thin
        self.pilot = pilot
        self.target_rate = target_rate
        self.n_pilot = n_pilot
        self.pilot_window = pilot_window
        self.max_adjust = max_adjust
        self.on_tuning_failure = on_tuning_failure
        self.h = h
        self.sigma = sigma
        self.adaptive = adaptive
        self.t0 = t0
        self.epsilon = epsilon
        self.prior_upper = prior_upper
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _fixed(self):
        return dict(self.fixed or {})

    def _setup(self):
        spec = self._spec()
        pmap = ParameterMap(tuple(self.params), self._fixed())
        # a sampled p_obs only needs a placeholder here
        p_obs = 0.5 if "p_obs" in pmap.names and self.p_obs is None else self.p_obs
        obs_model = build_observation_model(self.obs, p_obs, self.n_ratio, self.variance_floor)
        if "p_obs" in pmap.names and obs_model.kind != "binomial":
            raise ValueError("p_obs can only be sampled with binomial observations")
        upper = pmap.upper_bounds()
        if self.prior_upper is not None:
            upper = np.minimum(upper, np.asarray(self.prior_upper, dtype=float))
        prior = Prior.flat_positive(pmap.dim, upper)
        if self.theta0 is None:
            raise ValueError("theta0 is required")
        theta0 = np.asarray(self.theta0, dtype=float)
        if theta0.shape != (pmap.dim,):
            raise ValueError(f"theta0 must have {pmap.dim} entries")
        return spec, pmap, obs_model, prior, theta0

    def _proposal(self, dim):
        if self.adaptive:
            if self.h is None:
                raise ValueError("adaptive mode needs a fixed h")
            return Proposal(self.h, np.eye(dim), "adaptive", self.t0, self.epsilon)
        sigma = np.eye(dim) if self.sigma is None else self.sigma
        return Proposal(2.38**2 / dim if self.h is None else self.h, sigma)

    def fit(self, X, y=None):
        """Tune (optionally) and run the chains on observed data ``X``.

        Sets ``chains_``, ``tuning_``, ``posterior_`` (pooled burnt and
        thinned samples), ``summary_``, ``info_`` and ``names_``.
        """
        if self.on_tuning_failure not in ("raise", "continue"):
            raise ValueError("on_tuning_failure must be 'raise' or 'continue'")
        observed = check_observed(X)
        spec, pmap, obs_model, prior, theta0 = self._setup()
        init = self._init(spec)
        master = self._master_seed()
        started = time.perf_counter()

        tuning = None
        if self.pilot and not self.adaptive:
            pilot_seed = _rng.child_seed(master, "pilot")
            try:
                res = pilot_tune(spec, obs_model, observed, init, prior, theta0, pmap,
                                 self.n_particles, pilot_seed, tuple(self.target_rate),
                                 self.n_pilot, self.pilot_window, self.max_adjust)
                failed = None
            except TuningError as err:
                if self.on_tuning_failure == "raise" or err.partial is None:
                    raise
                logger.warning("pilot tuning failed (%s); continuing with its best setting", err)
                res, failed = err.partial, str(err)
            proposal = Proposal(res.h, res.sigma)
            theta0 = res.theta
            tuning = {"h": res.h, "sigma": np.asarray(res.sigma).tolist(),
                      "theta_start": theta0.tolist(), "trace": res.trace, "seed": pilot_seed,
                      "failed": failed}
        else:
            proposal = self._proposal(pmap.dim)
            tuning = {"h": proposal.h, "sigma": proposal.sigma.tolist(),
                      "theta_start": theta0.tolist(), "trace": [], "seed": None,
                      "failed": None, "mode": proposal.mode}

        seeds = [_rng.child_seed(master, "chain", k) for k in range(self.n_chains)]
        jobs = [(spec, obs_model, observed, init, prior, proposal, self.n_steps,
                 self.n_particles, s, theta0, pmap) for s in seeds]
        self.chains_ = run_chains(jobs, self.n_jobs)
        self.tuning_ = tuning
        self.names_ = pmap.names
        self.seeds_ = seeds
        self.wall_time_ = time.perf_counter() - started
        self._summarize()
        return self

    def _summarize(self, truth=None):
        kept = [burn_thin(c.samples, self.burn, self.thin) for c in self.chains_]
        self.posterior_ = np.concatenate(kept)
        self.summary_, self.info_ = summarize(self.chains_, self.names_, truth,
                                              self.burn, self.thin)

    def score_truth(self, truth):
        """Recompute the summary with PMSE against ``truth`` (dict by name)."""
        check_is_fitted(self, "chains_")
        self._summarize(truth)
        return self.summary_


class ABCSampler(_Sampler):
    """Rejection ABC with uniform priors.

    Parameters
    ----------
    epsilon : float
        Distance threshold on the mean absolute difference of the infected
        and removed counts.
    n_accept : int
    lower, upper : array_like
        Uniform prior bounds for ``params``.
    """

    def __init__(self, model="sir", population=4820, init=(4800, 20, 0), params=("beta", "gamma"),
                 fixed=None, epsilon=150.0, n_accept=1000, lower=(0.0, 0.0), upper=(5.0, 5.0),
                 max_attempts=10_000_000, random_state=None):
        self.model = model
        self.population = population
        self.init = init
        self.params = params
        self.fixed = fixed
        self.epsilon = epsilon
        self.n_accept = n_accept
        self.lower = lower
        self.upper = upper
        self.max_attempts = max_attempts
        self.random_state = random_state

    def _fixed(self):
        return dict(self.fixed or {})

    def fit(self, X, y=None):
        observed = check_observed(X)
        spec = self._spec()
        prior = Prior.uniform(self.lower, self.upper)
        seed = _rng.child_seed(self._master_seed(), "abc")
        started = time.perf_counter()
        result = abc_rejection(spec, prior, tuple(self.params), observed,
                               AbcConfig(self.epsilon, self.n_accept, self.max_attempts),
                               self._init(spec), seed)
        self.result_ = result
        self.posterior_ = result.samples
        self.names_ = result.names
        self.attempts_ = result.attempts
        self.seed_ = seed
        self.wall_time_ = time.perf_counter() - started
        return self

