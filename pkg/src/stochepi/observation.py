"""Emission layer of the hidden Markov model.

Two observation models are supported:

``gaussian``
    ``y_c = x_c + e`` with ``e ~ Normal(0, max(n_ratio * x_c, variance_floor))``.
    The floor keeps the density finite when a compartment is empty.
``binomial``
    ``y_c ~ Binomial(x_c, p_obs)`` independently per compartment (under-reporting).
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from ._rng import as_seed

logger = logging.getLogger(__name__)

GAUSSIAN = 0
BINOMIAL = 1
KINDS = {"gaussian": GAUSSIAN, "binomial": BINOMIAL}

DEFAULT_VARIANCE_FLOOR = 0.25

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ObservationModel:
    kind: str
    n_ratio: Optional[float] = None
    p_obs: Optional[float] = None
    variance_floor: Optional[float] = None
    observed: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.n_ratio is None or self.n_ratio < 0:
                raise ValueError("gaussian observations need n_ratio >= 0")
            if self.p_obs is not None:
                raise ValueError("p_obs does not apply to gaussian observations")
            if self.variance_floor is None:
                object.__setattr__(self, "variance_floor", DEFAULT_VARIANCE_FLOOR)
            if not self.variance_floor > 0:
                raise ValueError("variance_floor must be > 0")
        elif self.kind == "binomial":
            if self.p_obs is None or not 0 < self.p_obs <= 1:
                raise ValueError("binomial observations need p_obs in (0, 1]")
            if self.n_ratio is not None or self.variance_floor is not None:
                raise ValueError("n_ratio/variance_floor do not apply to binomial observations")
        else:
            raise ValueError(f"unknown observation kind {self.kind!r}")
        if self.observed is not None:
            object.__setattr__(self, "observed", tuple(int(c) for c in self.observed))

    @classmethod
    def gaussian(cls, n_ratio, variance_floor=DEFAULT_VARIANCE_FLOOR, observed=None):
        return cls("gaussian", n_ratio=n_ratio, variance_floor=variance_floor, observed=observed)

    @classmethod
    def binomial(cls, p_obs, observed=None):
        return cls("binomial", p_obs=p_obs, observed=observed)

    def with_p_obs(self, p_obs):
        return ObservationModel("binomial", p_obs=p_obs, observed=self.observed)

    def observed_index(self, n_compartments):
        if self.observed is None:
            return np.arange(n_compartments, dtype=np.int64)
        idx = np.asarray(self.observed, dtype=np.int64)
        if np.any(idx < 0) or np.any(idx >= n_compartments):
            raise ValueError("observed compartment index out of range")
        return idx

    def kernel_args(self, n_compartments):
        """Positional arguments for the compiled density."""
        return (
            KINDS[self.kind],
            float(self.n_ratio or 0.0),
            float(self.variance_floor or DEFAULT_VARIANCE_FLOOR),
            float(self.p_obs or 1.0),
            self.observed_index(n_compartments),
        )


@dataclass(frozen=True)
class ObservedSeries:
    """Observations at increasing times; ``values`` is ``(n_times, n_observed)``.

    ``integer`` marks count data (binomial reports) for serialisation.
    """

    times: np.ndarray
    values: np.ndarray
    columns: tuple
    integer: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape != (len(times), len(self.columns)):
            raise ValueError("values must be (n_times, n_columns)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("observation times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self):
        return len(self.times)

    def truncate(self, n_times):
        """First ``n_times`` observations."""
        if not 1 <= n_times <= len(self):
            raise ValueError(f"cannot keep {n_times} of {len(self)} observations")
        return ObservedSeries(self.times[:n_times], self.values[:n_times], self.columns,
                              self.integer)


@numba.njit(cache=True)
def _binom_logpmf(k, n, p):
    if k < 0 or k > n:
        return -np.inf
    if p >= 1.0:
        return 0.0 if k == n else -np.inf
    out = math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
    if k > 0:
        out += k * math.log(p)
    if n - k > 0:
        out += (n - k) * math.log1p(-p)
    return out


@numba.njit(cache=True)
def _log_density(kind, n_ratio, floor, p_obs, idx, hidden, y):
    """Log emission density; returns ``(value, floor_hits)``."""
    total = 0.0
    hits = 0
    for m in range(idx.shape[0]):
        x = hidden[idx[m]]
        if kind == 0:
            var = n_ratio * x
            if var < floor:
                var = floor
                hits += 1
            r = y[m] - x
            total += -0.5 * (_LOG_2PI + math.log(var)) - 0.5 * r * r / var
        else:
            k = y[m]
            if k != math.floor(k):
                return -np.inf, hits
            total += _binom_logpmf(k, float(x), p_obs)
            if total == -np.inf:
                return -np.inf, hits
    return total, hits


def log_obs_density(model, hidden, observed):
    """Log density of ``observed`` given hidden counts.

    Returns ``-inf`` for impossible observations (binomial counts above the
    hidden count, or non-integer binomial counts).
    """
    hidden = np.asarray(hidden, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    args = model.kernel_args(hidden.shape[0])
    if observed.shape != (args[-1].shape[0],):
        raise ValueError(f"expected {args[-1].shape[0]} observed values, got {observed.shape}")
    value, hits = _log_density(*args, hidden, observed)
    if hits:
        logger.debug("gaussian variance floor applied to %d compartment(s)", hits)
    return value


def simulate_observation(model, hidden, rng=None):
    """Draw one observation vector for hidden counts ``hidden``.

    Real-valued hidden states are allowed.  Binomial thinning rounds them
    half-to-even first; gaussian noise is added to the unrounded values.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(as_seed(rng))
    hidden = np.asarray(hidden, dtype=np.float64)
    x = hidden[model.observed_index(hidden.shape[0])]
    if np.any(x < 0):
        raise ValueError("hidden counts must be non-negative")
    if model.kind == "gaussian":
        var = model.n_ratio * x
        floored = var < model.variance_floor
        if floored.any():
            logger.debug("gaussian variance floor applied to %d compartment(s)", floored.sum())
        var = np.maximum(var, model.variance_floor)
        return x + rng.normal(0.0, np.sqrt(var))
    counts = np.round(x).astype(np.int64)
    return rng.binomial(counts, model.p_obs).astype(np.int64)


def simulate_series(model, hidden, rng=None, skip_first=True):
    """Observe every row of a grid trajectory.

    With ``skip_first`` the initial state (time 0) is not observed; the series
    covers the remaining grid times.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(as_seed(rng))
    start = 1 if skip_first else 0
    rows = [simulate_observation(model, x, rng) for x in hidden.states[start:]]
    idx = model.observed_index(len(hidden.compartments))
    return ObservedSeries(hidden.times[start:], np.array(rows, dtype=np.float64),
                          tuple(hidden.compartments[i] for i in idx), model.kind == "binomial")
