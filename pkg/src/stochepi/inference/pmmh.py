"""Particle-marginal Metropolis-Hastings and its two-stage pilot tuning."""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import _rng
from ..exceptions import FilterFailureError, TuningError
from ..models import Params
from ..smc import log_likelihood
from .mh import Chain, Proposal, mh_acceptance, proposal_factor

logger = logging.getLogger(__name__)

ESTIMABLE = ("beta", "gamma", "alpha", "p_obs")


@dataclass(frozen=True)
class ParameterMap:
    """Which parameters are sampled, and fixed values for the rest.

    ``names`` orders the sampled vector ``theta``.  ``p_obs`` may be sampled
    only with a binomial observation model.
    """

    names: tuple
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(self.names)
        unknown = set(names) - set(ESTIMABLE)
        if unknown:
            raise ValueError(f"cannot sample {sorted(unknown)}")
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        clash = set(names) & set(self.fixed)
        if clash:
            raise ValueError(f"{sorted(clash)} both sampled and fixed")
        object.__setattr__(self, "names", names)

    @property
    def dim(self):
        return len(self.names)

    def upper_bounds(self):
        return np.array([1.0 if n == "p_obs" else np.inf for n in self.names])

    def build(self, theta, obs_model):
        values = dict(self.fixed)
        values.update(zip(self.names, (float(v) for v in theta)))
        p_obs = values.pop("p_obs", None)
        params = Params(values["beta"], values["gamma"], values.get("alpha"))
        if "p_obs" in self.names:
            obs_model = obs_model.with_p_obs(p_obs)
        return params, obs_model


@dataclass
class Target:
    """Unnormalised log posterior ``log prior + log Z_hat`` for one data set."""

    spec: object
    obs_model: object
    observed: object
    init: np.ndarray
    prior: object
    pmap: ParameterMap
    n_particles: int
    t0: float = 0.0

    def log_prior(self, theta):
        return self.prior.log_density(theta)

    def log_likelihood(self, theta, seed):
        params, obs_model = self.pmap.build(theta, self.obs_model)
        return log_likelihood(self.spec, params, obs_model, self.observed, self.init,
                              self.n_particles, seed, t0=self.t0)

    def __call__(self, theta, seed):
        lp = self.log_prior(theta)
        if lp == -np.inf:
            return -np.inf
        return lp + self.log_likelihood(theta, seed)


def _mh_loop(target, theta0, log_target0, proposal, n_steps, seed, step_offset=0):
    d = len(theta0)
    gen = np.random.default_rng([seed, _rng.PROPOSE, step_offset])
    samples = np.empty((n_steps + 1, d))
    log_target = np.empty(n_steps + 1)
    accepted = np.zeros(n_steps + 1, dtype=bool)
    covs = np.full((n_steps + 1, d, d), np.nan)
    samples[0] = theta0
    log_target[0] = log_target0

    adaptive = proposal.mode == "adaptive"
    eye = np.eye(d)
    scale = math.sqrt(proposal.h)
    factor = None if adaptive else proposal_factor(proposal.sigma)
    mean = np.array(theta0, dtype=float)
    m2 = np.zeros((d, d))
    current, current_lt = samples[0].copy(), log_target0
    started = time.perf_counter()

    for t in range(1, n_steps + 1):
        if adaptive:
            if t <= proposal.t0:
                cov, factor = eye, eye
            else:
                cov = m2 / (t - 1) + proposal.epsilon * eye
                factor = proposal_factor(cov)
        else:
            cov = proposal.sigma
        covs[t] = cov
        z = gen.standard_normal(d)
        u = gen.random()
        candidate = current + scale * (factor @ z)
        if np.array_equal(candidate, current):
            # null move: the state (theta, Z_hat) is unchanged
            accept, cand_lt = True, current_lt
        else:
            cand_lt = target(candidate, _rng.substream(np.uint64(seed), _rng.FILTER,
                                                       step_offset + t))
            accept = u < mh_acceptance(cand_lt, current_lt)
        if accept:
            current, current_lt = candidate, cand_lt
        samples[t] = current
        log_target[t] = current_lt
        accepted[t] = accept

        delta = current - mean
        mean += delta / (t + 1)
        m2 += np.outer(delta, current - mean)
        if t % 1000 == 0:
            logger.info("step %d/%d, acceptance %.3f, %.1fs", t, n_steps,
                        accepted[1:t + 1].mean(), time.perf_counter() - started)
    return samples, log_target, accepted, covs


def pmmh_run(spec, obs_model, observed, init, prior, proposal, n_steps, n_particles, rng,
             theta0, pmap, t0=0.0):
    """Run one PMMH chain of ``n_steps`` proposals from ``theta0``.

    Proposals outside the prior support are rejected without running the
    filter.  The likelihood estimate of the current state is carried forward,
    never recomputed.  The returned chain has ``n_steps + 1`` rows, the first
    being ``theta0``.

    Raises
    ------
    FilterFailureError
        If the filter gives zero likelihood at ``theta0``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if proposal.dim != pmap.dim or len(theta0) != pmap.dim:
        raise ValueError("theta0, proposal and parameter map dimensions differ")
    seed = _rng.as_seed(rng)
    target = Target(spec, obs_model, observed, np.asarray(init), prior, pmap, n_particles, t0)
    theta0 = np.asarray(theta0, dtype=float)
    lt0 = target(theta0, _rng.substream(np.uint64(seed), _rng.FILTER, 0))
    if lt0 == -np.inf:
        raise FilterFailureError(
            f"zero posterior density at the initial point {dict(zip(pmap.names, theta0))}")
    samples, log_target, accepted, covs = _mh_loop(target, theta0, lt0, proposal, n_steps, seed)
    meta = {"seed": seed, "n_particles": n_particles, "mode": proposal.mode}
    if proposal.mode == "adaptive":
        meta.update(t0=proposal.t0, epsilon=proposal.epsilon)
    return Chain(pmap.names, samples, log_target, accepted, proposal.h, covs, meta)


@dataclass
class TuningResult:
    h: float
    sigma: np.ndarray
    theta: np.ndarray
    trace: list


def pilot_tune(spec, obs_model, observed, init, prior, theta0, pmap, n_particles, rng,
               target_rate=(0.10, 0.25), n_pilot=1000, window=100, max_adjust=20, h0=None,
               warmup_fraction=0.2, t0=0.0):
    """Two-stage pilot run that fixes ``h`` and ``sigma`` for the main chains.

    Stage 1 runs with ``sigma = I``, doubling or halving ``h`` over short
    windows (then bisecting geometrically once bracketed) until the window
    acceptance rate falls inside ``target_rate``.  A run of ``n_pilot`` steps
    at that ``h`` gives ``sigma`` as the sample covariance of its
    post-warmup states.  Stage 2 re-tunes ``h`` for the new ``sigma`` and
    confirms the rate with another ``n_pilot`` steps.  Each stage may adjust
    ``h`` at most ``max_adjust`` times.

    Returns
    -------
    TuningResult
        ``theta`` is the last state of the confirmation run.

    Raises
    ------
    TuningError
        When a stage runs out of adjustments.  ``error.partial`` then holds
        the ``h`` whose acceptance came closest to the band, the best
        covariance available and the current state.
    """
    lo_rate, hi_rate = target_rate
    seed = _rng.as_seed(rng)
    target = Target(spec, obs_model, observed, np.asarray(init), prior, pmap, n_particles, t0)
    d = pmap.dim
    theta = np.asarray(theta0, dtype=float)
    lt = target(theta, _rng.substream(np.uint64(seed), _rng.FILTER, 0))
    if lt == -np.inf:
        raise FilterFailureError(
            f"zero posterior density at the initial point {dict(zip(pmap.names, theta))}")
    trace = []
    offset = 1
    visited = [theta[None, :]]

    def run(h, sigma, n, stage):
        nonlocal theta, lt, offset
        samples, log_target, accepted, _ = _mh_loop(
            target, theta, lt, Proposal(h, sigma), n, seed, step_offset=offset)
        offset += n
        theta, lt = samples[-1].copy(), log_target[-1]
        visited.append(samples[1:])
        rate = float(accepted[1:].mean())
        trace.append({"stage": stage, "h": h, "steps": n, "acceptance": rate})
        logger.info("pilot stage %d: h=%.4g over %d steps -> acceptance %.3f", stage, h, n, rate)
        return samples, rate

    def best_h(stage):
        # closest to the band on a log scale
        def miss(e):
            r = max(e["acceptance"], 1e-6)
            return max(math.log(lo_rate / r), math.log(r / hi_rate), 0.0)
        return min((e for e in trace if e["stage"] == stage), key=miss)["h"]

    def fail(message, stage, sigma):
        pts = np.concatenate(visited)
        if stage == 1:
            cov = np.atleast_2d(np.cov(pts[int(warmup_fraction * len(pts)):], rowvar=False))
            if np.all(np.isfinite(cov)) and np.all(np.diag(cov) > 0):
                sigma = cov
        partial = TuningResult(best_h(stage), sigma, theta.copy(), list(trace))
        raise TuningError(message, [(e["h"], e["acceptance"]) for e in trace], partial)

    def tune_h(h, sigma, stage):
        low_h, high_h = 0.0, np.inf
        adjustments = 0
        while True:
            _, rate = run(h, sigma, window, stage)
            if lo_rate <= rate <= hi_rate:
                return h, adjustments
            adjustments += 1
            if adjustments > max_adjust:
                fail(f"stage {stage}: acceptance band {target_rate} not reached in "
                     f"{max_adjust} adjustments", stage, sigma)
            if rate > hi_rate:
                low_h = h
            else:
                high_h = h
            if np.isinf(high_h):
                h = 2.0 * h
            elif low_h == 0.0:
                h = 0.5 * h
            else:
                h = math.sqrt(low_h * high_h)

    h = 2.38**2 / d if h0 is None else h0
    eye = np.eye(d)
    h, _ = tune_h(h, eye, 1)
    samples, _ = run(h, eye, n_pilot, 1)
    kept = samples[int(warmup_fraction * len(samples)):]
    sigma = np.atleast_2d(np.cov(kept, rowvar=False))
    if not np.all(np.isfinite(sigma)) or np.any(np.diag(sigma) <= 0):
        fail("stage-1 pilot chain did not move; cannot estimate sigma", 1, eye)

    h = 2.38**2 / d
    used = 0
    while True:
        h, n_adj = tune_h(h, sigma, 2)
        used += n_adj
        _, rate = run(h, sigma, n_pilot, 2)
        if lo_rate <= rate <= hi_rate:
            break
        used += 1
        if used > max_adjust:
            fail(f"confirmation run acceptance {rate:.3f} outside {target_rate}", 2, sigma)
        h = h * (2.0 if rate > hi_rate else 0.5)
    return TuningResult(h, sigma, theta.copy(), trace)
