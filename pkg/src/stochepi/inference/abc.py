"""ABC rejection sampling with Gillespie simulations."""

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from .. import _rng
from ..exceptions import EpsilonTooSmallError
from ..gillespie import _advance, _int_state

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 10_000_000
MIN_RATE = 1e-6
SUMMARY_COMPARTMENTS = ("I", "R")
# slot of each parameter in the model's rate vector
_RATE_SLOT = {"beta": 0, "gamma": 1, "alpha": 2}


@dataclass(frozen=True)
class AbcConfig:
    """Settings of one rejection run.

    The summary statistic is the vector of infected and removed counts at
    every observation time; the distance is their mean absolute difference.
    """

    epsilon: float
    n_accept: int
    max_attempts: int = MAX_ATTEMPTS
    batch: int = 1000

    def __post_init__(self):
        if math.isnan(self.epsilon):
            raise ValueError("epsilon must be a number")
        if self.n_accept < 1:
            raise ValueError("n_accept must be >= 1")
        if self.max_attempts < 1 or self.batch < 1:
            raise ValueError("max_attempts and batch must be >= 1")


@dataclass
class AbcResult:
    names: tuple
    samples: np.ndarray
    distances: np.ndarray
    attempt_index: np.ndarray
    attempts: int
    epsilon: float

    @property
    def acceptance_rate(self):
        return len(self.samples) / self.attempts if self.attempts else float("nan")


@numba.njit(cache=True, fastmath=_rng.FASTMATH)
def _abc_batch(seed, start, count, lower, upper, slots, base_rates, x0, t_grid, obs, cols,
               kinds, rate_index, src, partner, stoich, n):
    """Draw and score attempts ``start .. start + count - 1``.

    Attempt ``j`` uses only ``substream(seed, ABC, j)``: first the prior
    draws, then the simulation.  Its outcome therefore does not depend on
    batching or on epsilon.
    """
    d = lower.shape[0]
    n_t = obs.shape[0]
    n_s = cols.shape[0]
    theta = np.empty((count, d))
    dist = np.empty(count)
    rates = base_rates.copy()
    a = np.empty(kinds.shape[0])
    x = np.empty(x0.shape[0], dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    for c in range(count):
        state[0] = _rng.substream(seed, _rng.ABC, start + c)
        for j in range(d):
            v = lower[j] + (upper[j] - lower[j]) * _rng.uniform(state)
            theta[c, j] = v
            rates[slots[j]] = v
        x[:] = x0
        total = 0.0
        for g in range(n_t):
            _advance(x, t_grid[g], t_grid[g + 1], rates, kinds, rate_index, src, partner,
                     stoich, n, a, state)
            for m in range(n_s):
                total += abs(x[cols[m]] - obs[g, m])
        dist[c] = total / (n_t * n_s)
    return theta, dist


def observed_summary(observed):
    """Infected and removed columns of an observed series, ``(n_times, 2)``."""
    try:
        idx = [observed.columns.index(c) for c in SUMMARY_COMPARTMENTS]
    except ValueError:
        raise ValueError(f"observed data must include columns {SUMMARY_COMPARTMENTS}") from None
    return observed.values[:, idx]


def distance_floor(summary):
    """Smallest distance any integer-valued simulation can reach."""
    summary = np.asarray(summary, dtype=float)
    return float(np.mean(np.abs(summary - np.round(summary))))


def abc_rejection(spec, prior, names, observed, config, init, rng=None, t0=0.0):
    """Rejection ABC: keep prior draws whose simulated summary lies within epsilon.

    Parameters
    ----------
    spec : ModelSpec
    prior : Prior
        Must be a proper uniform prior over ``names``.
    names : sequence of str
        Sampled rate parameters; any of ``beta``, ``gamma``, ``alpha``.
        Every rate the model needs must be sampled.
    observed : ObservedSeries
        Must contain the ``I`` and ``R`` columns.
    config : AbcConfig
    init : array_like
        Initial counts at ``t0``.

    Returns
    -------
    AbcResult
        ``attempt_index`` identifies the attempts that were accepted.  Runs
        with the same seed share attempts, so a smaller epsilon accepts a
        subset of what a larger one accepts.

    Raises
    ------
    EpsilonTooSmallError
        If ``epsilon <= 0``, if it lies below the distance reachable by any
        integer path, or if the acceptance rate stays below ``1e-6`` over the
        attempt budget.
    """
    names = tuple(names)
    if prior.kind != "uniform" or prior.dim != len(names):
        raise ValueError("ABC needs a uniform prior with one bound per sampled parameter")
    missing = set(spec.required_params) - set(names)
    if missing or not set(names) <= set(_RATE_SLOT):
        raise ValueError(f"ABC samples rate parameters only and needs all of "
                         f"{spec.required_params}; got {names}")
    eps = float(config.epsilon)
    summary = observed_summary(observed)
    if eps <= 0:
        raise EpsilonTooSmallError(f"epsilon must be positive, got {eps}")
    floor = distance_floor(summary)
    if eps < floor:
        raise EpsilonTooSmallError(
            f"epsilon {eps} is below {floor:.4g}, the distance of the data from integer counts")
    if observed.times[0] <= t0:
        raise ValueError("observations must start after t0")

    seed = np.uint64(_rng.as_seed(rng))
    x0 = _int_state(spec, init)
    t_grid = np.concatenate([[float(t0)], observed.times])
    cols = np.array([spec.compartments.index(c) for c in SUMMARY_COMPARTMENTS], dtype=np.int64)
    slots = np.array([_RATE_SLOT[nm] for nm in names], dtype=np.int64)
    model = (spec.kinds, spec.rate_index, spec.src, spec.partner, spec.stoichiometry,
             float(spec.population))
    base_rates = np.zeros(3)

    thetas, dists, index = [], [], []
    n_acc = 0
    attempts = 0
    while n_acc < config.n_accept and attempts < config.max_attempts:
        count = min(config.batch, config.max_attempts - attempts)
        theta, dist = _abc_batch(seed, attempts, count, prior.lower, prior.upper, slots,
                                 base_rates, x0, t_grid, summary, cols, *model)
        hit = np.flatnonzero(dist <= eps)[:config.n_accept - n_acc]
        if hit.size:
            thetas.append(theta[hit])
            dists.append(dist[hit])
            index.append(attempts + hit)
            n_acc += hit.size
        # attempts counts draws up to and including the last one needed
        attempts += count if n_acc < config.n_accept else int(hit[-1]) + 1
        if attempts % 100_000 < count:
            logger.info("ABC: %d accepted after %d attempts", n_acc, attempts)

    if n_acc < config.n_accept:
        rate = n_acc / attempts
        if rate < MIN_RATE:
            raise EpsilonTooSmallError(
                f"acceptance rate {rate:.2e} over {attempts} attempts; epsilon {eps} too small")
        logger.warning("attempt budget exhausted with %d of %d samples", n_acc, config.n_accept)

    d = len(names)
    return AbcResult(
        names,
        np.concatenate(thetas) if thetas else np.empty((0, d)),
        np.concatenate(dists) if dists else np.empty(0),
        np.concatenate(index) if index else np.empty(0, dtype=np.int64),
        attempts, eps)
