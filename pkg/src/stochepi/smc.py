"""Bootstrap particle filter over the Gillespie transition kernel."""

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from . import _rng
from ._rng import as_seed
from .exceptions import NoPathError
from .gillespie import _advance, _int_state, _model_arrays
from .models import Trajectory
from .observation import _log_density

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParticleSystem:
    """Complete output of one filter run.

    Step ``0`` is the initial point mass and step ``k >= 1`` is observation
    time ``k``.  ``ancestry[k - 1, i]`` is the index, at step ``k - 1``, of
    the parent of particle ``i`` at step ``k``; ``final_ancestors`` is the
    resampling draw made after the last observation.
    """

    times: np.ndarray
    particles: np.ndarray
    log_weights: np.ndarray
    ancestry: np.ndarray
    final_ancestors: np.ndarray
    log_z: float
    failed_step: int
    compartments: tuple

    @property
    def failed(self):
        return self.failed_step >= 0

    @property
    def n_particles(self):
        return self.particles.shape[1]


@numba.njit(cache=True)
def _resample(log_w_norm, out, state):
    """Multinomial draw of ``len(out)`` ancestors by inverse-CDF search."""
    n = log_w_norm.shape[0]
    cdf = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc += math.exp(log_w_norm[i])
        cdf[i] = acc
    for i in range(out.shape[0]):
        u = _rng.uniform(state) * acc
        j = np.searchsorted(cdf, u, side="right")
        if j >= n:
            j = n - 1
        while j > 0 and log_w_norm[j] == -np.inf:
            j -= 1
        out[i] = j


@numba.njit(cache=True, fastmath=_rng.FASTMATH)
def _filter(x0, t0, obs_times, obs_values, rates, kinds, rate_index, src, partner, stoich,
            n, okind, n_ratio, floor, p_obs, idx, n_particles, seed, keep_history):
    n_t = obs_times.shape[0]
    n_c = x0.shape[0]
    P = n_particles
    h = n_t if keep_history else 0
    hist = np.empty((h + 1, P, n_c), dtype=np.int64)
    log_w_hist = np.full((h, P), -np.inf)
    anc_hist = np.zeros((h, P), dtype=np.int64)

    x = np.empty((P, n_c), dtype=np.int64)
    x_new = np.empty((P, n_c), dtype=np.int64)
    for i in range(P):
        x[i] = x0
    if keep_history:
        hist[0] = x
    parent = np.arange(P)
    lw = np.empty(P)
    xl = np.empty(n_c, dtype=np.int64)
    a = np.empty(kinds.shape[0])
    state = np.empty(1, dtype=np.uint64)
    log_z = 0.0
    log_p = math.log(P)
    hits = 0
    t_prev = t0
    seed = np.uint64(seed)
    for k in range(n_t):
        dt = obs_times[k] - t_prev
        t_prev = obs_times[k]
        for i in range(P):
            xl[:] = x[parent[i]]
            state[0] = _rng.substream(seed, k + 1, i + 1)
            _advance(xl, 0.0, dt, rates, kinds, rate_index, src, partner, stoich, n, a, state)
            x_new[i] = xl
        x, x_new = x_new, x
        if keep_history:
            hist[k + 1] = x
            anc_hist[k] = parent

        m = -np.inf
        for i in range(P):
            v, hh = _log_density(okind, n_ratio, floor, p_obs, idx, x[i], obs_values[k])
            hits += hh
            lw[i] = v
            if v > m:
                m = v
        if m == -np.inf:
            return -np.inf, k, hist, log_w_hist, anc_hist, parent, hits
        s = 0.0
        for i in range(P):
            s += math.exp(lw[i] - m)
        log_s = math.log(s)
        log_z += m + log_s - log_p
        for i in range(P):
            lw[i] = lw[i] - m - log_s
        if keep_history:
            log_w_hist[k] = lw

        state[0] = _rng.substream(seed, k + 1, 0)
        new_parent = np.empty(P, dtype=np.int64)
        _resample(lw, new_parent, state)
        parent = new_parent
    return log_z, -1, hist, log_w_hist, anc_hist, parent, hits


def _prepare(spec, params, obs_model, observed, init, n_particles):
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    x0 = _int_state(spec, init)
    args = obs_model.kernel_args(spec.n_compartments)
    if observed.values.shape[1] != args[-1].shape[0]:
        raise ValueError("observed columns do not match the observation model")
    return x0, args


def particle_filter(spec, params, obs_model, observed, init, n_particles, rng=None, t0=0.0,
                    keep_history=True):
    """Run the bootstrap filter and return the full :class:`ParticleSystem`.

    Particles start at the point mass ``init`` at time ``t0``.  At each
    observation time they are propagated by one Gillespie interval, weighted
    by the emission density, ``log_z`` gains ``logsumexp(w) - log(N)``, and
    ``N`` ancestors are drawn multinomially.  If every weight is zero the
    run stops early with ``log_z = -inf`` and ``failed_step`` set.
    """
    x0, oargs = _prepare(spec, params, obs_model, observed, init, n_particles)
    if observed.times[0] <= t0:
        raise ValueError("observations must start after t0")
    seed = as_seed(rng)
    log_z, failed, hist, log_w, anc, final, hits = _filter(
        x0, float(t0), observed.times, observed.values, *_model_arrays(spec, params), *oargs,
        int(n_particles), np.uint64(seed), keep_history)
    if hits:
        logger.debug("gaussian variance floor applied %d times", hits)
    times = np.concatenate([[t0], observed.times])
    return ParticleSystem(times, hist, log_w, anc, final, float(log_z), int(failed),
                          spec.compartments)


def log_likelihood(spec, params, obs_model, observed, init, n_particles, seed, t0=0.0):
    """Filter estimate of the log marginal likelihood, without storing history."""
    x0, oargs = _prepare(spec, params, obs_model, observed, init, n_particles)
    log_z = _filter(x0, float(t0), observed.times, observed.values,
                    *_model_arrays(spec, params), *oargs, int(n_particles),
                    np.uint64(seed), False)[0]
    return float(log_z)


def sample_path(system, rng=None):
    """Trace one particle's ancestry back from the final resampled set."""
    if system.failed:
        raise NoPathError(f"filter failed at step {system.failed_step}; no path to sample")
    if system.particles.shape[0] != len(system.times):
        raise NoPathError("particle system was run without history")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(as_seed(rng))
    n_steps = system.particles.shape[0]
    path = np.empty((n_steps, system.particles.shape[2]), dtype=np.int64)
    i = system.final_ancestors[rng.integers(system.n_particles)]
    path[-1] = system.particles[-1, i]
    for k in range(n_steps - 2, -1, -1):
        i = system.ancestry[k, i]
        path[k] = system.particles[k, i]
    return Trajectory(system.times, path, system.compartments, "grid")
