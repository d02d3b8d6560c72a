"""Chain post-processing: burn-in/thinning, R-hat, ESS, HPD, PMSE and bands."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _rng
from .exceptions import EmptyChainError
from .gillespie import _int_state, _model_arrays, _simulate_grid
from .models import Params

logger = logging.getLogger(__name__)


def burn_thin(chain, burn=0, thin=1):
    """Drop the first ``burn`` rows, then keep every ``thin``-th row.

    Works on a :class:`~stochepi.inference.mh.Chain` or a plain array.  The
    result has ``(len - burn - 1) // thin + 1`` rows.
    """
    n = len(chain)
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if burn < 0:
        raise ValueError("burn must be >= 0")
    if burn >= n:
        raise EmptyChainError(f"burn-in {burn} leaves nothing of a chain of length {n}")
    sl = slice(burn, None, thin)
    if isinstance(chain, np.ndarray):
        return chain[sl]
    covs = None if chain.proposal_covs is None else chain.proposal_covs[sl]
    return replace(chain, samples=chain.samples[sl], log_target=chain.log_target[sl],
                   accepted=chain.accepted[sl], proposal_covs=covs)


def move_rate(samples):
    """Fraction of consecutive rows that differ.

    On an unthinned chain this is the acceptance rate; after thinning it is
    the chance that at least one move happened between kept rows.
    """
    samples = np.asarray(samples)
    if len(samples) < 2:
        return float("nan")
    diff = samples[1:] != samples[:-1]
    if diff.ndim > 1:
        diff = diff.any(axis=1)
    return float(diff.mean())


def gelman_rubin(chains):
    """Potential scale reduction factor for one parameter.

    ``chains`` is ``(m, n)``: ``m >= 2`` chains of equal length ``n >= 10``.
    Uses the classic (non-split) statistic
    ``sqrt(((n - 1) / n * W + B / n) / W)``.  Returns ``nan`` (and logs a
    warning) when every chain is constant.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise ValueError("need an (m, n) array with m >= 2 chains")
    m, n = chains.shape
    if n < 10:
        raise ValueError("chains must have at least 10 samples")
    w = chains.var(axis=1, ddof=1).mean()
    b_over_n = chains.mean(axis=1).var(ddof=1)
    if w == 0:
        logger.warning("zero within-chain variance; R-hat undefined")
        return float("nan")
    return float(math.sqrt(((n - 1) / n * w + b_over_n) / w))


def autocorrelation(x):
    """Normalised autocorrelation at all lags, computed by FFT."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n]
    return acov / acov[0]


def effective_sample_size(samples):
    """ESS with Geyer's initial positive sequence truncation.

    Autocorrelations are summed in adjacent pairs while the pair sums stay
    positive; the result ``n / (1 + 2 * sum(rho))`` is clipped to ``(0, n]``.
    A constant series returns ``n`` with a warning.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError("need at least 10 samples")
    if np.all(x == x[0]):
        logger.warning("constant series; ESS set to n")
        return float(n)
    rho = autocorrelation(x)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(min(n, n / max(tau, 1e-12)))


def hpd_interval(samples, mass=0.95):
    """Narrowest window of sorted samples containing ``ceil(mass * n)`` of them."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < 20:
        raise ValueError("need at least 20 samples for an HPD interval")
    if not 0 < mass <= 1:
        raise ValueError("mass must lie in (0, 1]")
    k = math.ceil(mass * n - 1e-9)
    widths = x[k - 1:] - x[:n - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def pmse(samples, truth):
    """Posterior mean squared error ``sum((truth - s)**2) / n``."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no samples")
    return float(np.sum((truth - samples) ** 2) / samples.size)


@dataclass
class ParameterSummary:
    mean: float
    median: float
    hpd_low: float
    hpd_high: float
    ess: float
    rhat: Optional[float] = None
    pmse: Optional[float] = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


def summarize(chains, names, truth=None, burn=0, thin=1, mass=0.95):
    """Pooled posterior summary of several chains.

    ESS is summed over chains; R-hat needs at least two chains.
    Returns ``(per_parameter, info)`` where ``info`` holds acceptance rates
    before and after thinning.
    """
    kept = [burn_thin(np.asarray(c.samples if hasattr(c, "samples") else c), burn, thin)
            for c in chains]
    length = min(len(k) for k in kept)
    kept = [k[:length] for k in kept]
    pooled = np.concatenate(kept)
    out = {}
    for j, name in enumerate(names):
        col = pooled[:, j]
        low, high = hpd_interval(col, mass)
        rhat = None
        if len(kept) >= 2:
            rhat = gelman_rubin(np.stack([k[:, j] for k in kept]))
        ess = sum(effective_sample_size(k[:, j]) for k in kept)
        out[name] = ParameterSummary(
            float(col.mean()), float(np.median(col)), low, high, ess, rhat,
            None if truth is None or name not in truth else pmse(col, truth[name]))
    raw = [np.asarray(c.samples if hasattr(c, "samples") else c) for c in chains]
    info = {
        "n_chains": len(chains),
        "n_kept": int(len(pooled)),
        "acceptance_pre_thinning": float(np.mean([move_rate(r) for r in raw])),
        "acceptance_post_thinning": float(np.mean([move_rate(k) for k in kept])),
    }
    return out, info


def trajectory_bands(spec, thetas, names, init, t_grid, n_draws, rng=None, fixed=None,
                     quantiles=(0.025, 0.5, 0.975)):
    """Posterior-predictive quantile bands on ``t_grid``.

    Parameter vectors are drawn from ``thetas`` with replacement and one
    Gillespie path is simulated for each.  Returns an array of shape
    ``(len(t_grid), n_compartments, len(quantiles))``.
    """
    if n_draws < 100:
        raise ValueError("n_draws must be >= 100")
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(_rng.as_seed(rng))
    picks = gen.integers(0, len(thetas), size=n_draws)
    seeds = gen.integers(0, 2**63, size=n_draws)
    t_grid = np.asarray(t_grid, dtype=float)
    x0 = _int_state(spec, init)
    paths = np.empty((n_draws, len(t_grid), spec.n_compartments))
    fixed = dict(fixed or {})
    fixed.pop("p_obs", None)
    for d, (i, s) in enumerate(zip(picks, seeds)):
        values = dict(fixed)
        values.update({n: v for n, v in zip(names, thetas[i]) if n != "p_obs"})
        params = Params(values["beta"], values["gamma"], values.get("alpha"))
        state = _rng.new_state(np.uint64(s))
        paths[d] = _simulate_grid(x0, t_grid, *_model_arrays(spec, params), state)
    return np.moveaxis(np.quantile(paths, quantiles, axis=0), 0, -1)
