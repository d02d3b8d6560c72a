"""Exact stochastic simulation (Gillespie direct method)."""

import math

import numba
import numpy as np

from . import _rng
from ._rng import as_seed
from .models import Trajectory, _propensities


@numba.njit(inline="always", cache=True)
def _pick_event(a, total, r2):
    # first j whose prefix sum exceeds r2 * total
    target = r2 * total
    acc = 0.0
    last = -1
    for j in range(a.shape[0]):
        if a[j] > 0.0:
            last = j
        acc += a[j]
        if acc > target:
            return j
    return last  # only reached through rounding in the prefix sums


@numba.njit(inline="always", cache=True, fastmath=_rng.FASTMATH)
def _advance_sir(x, t, t_end, beta_n, gamma, state):
    s, i, r = x[0], x[1], x[2]
    fired = 0
    while i > 0:
        a0 = beta_n * s * i
        total = a0 + gamma * i
        t += -math.log(_rng.uniform_open(state)) / total
        if t > t_end:
            break
        if _rng.uniform(state) * total < a0:
            s -= 1
            i += 1
        else:
            i -= 1
            r += 1
        fired += 1
    x[0], x[1], x[2] = s, i, r
    return fired


@numba.njit(inline="always", cache=True, fastmath=_rng.FASTMATH)
def _advance_seir(x, t, t_end, beta_n, alpha, gamma, state):
    s, e, i, r = x[0], x[1], x[2], x[3]
    fired = 0
    while e > 0 or i > 0:
        a0 = beta_n * s * i
        a1 = alpha * e
        total = a0 + a1 + gamma * i
        t += -math.log(_rng.uniform_open(state)) / total
        if t > t_end:
            break
        u = _rng.uniform(state) * total
        if u < a0:
            s -= 1
            e += 1
        elif u < a0 + a1:
            e -= 1
            i += 1
        else:
            i -= 1
            r += 1
        fired += 1
    x[0], x[1], x[2], x[3] = s, e, i, r
    return fired


@numba.njit(inline="always", cache=True, fastmath=_rng.FASTMATH)
def _advance_generic(x, t, t_end, rates, kinds, rate_index, src, partner, stoich, n, a, state):
    n_c = x.shape[0]
    n_e = kinds.shape[0]
    fired = 0
    while True:
        total = 0.0
        for j in range(n_e):
            if kinds[j] == 0:
                v = rates[rate_index[j]] * x[src[j]] * x[partner[j]] / n
            else:
                v = rates[rate_index[j]] * x[src[j]]
            a[j] = v
            total += v
        if total <= 0.0:
            return fired
        t += -math.log(_rng.uniform_open(state)) / total
        if t > t_end:
            return fired
        # first event whose propensity prefix sum exceeds r2 * total
        target = _rng.uniform(state) * total
        acc = 0.0
        j = -1
        for k in range(n_e):
            if a[k] > 0.0:
                j = k
            acc += a[k]
            if acc > target:
                break
        for c in range(n_c):
            x[c] += stoich[j, c]
        fired += 1


@numba.njit(inline="always", cache=True, fastmath=_rng.FASTMATH)
def _advance(x, t, t_end, rates, kinds, rate_index, src, partner, stoich, n, a, state):
    """Run events in place on ``x`` until the next one would land after ``t_end``.

    ``x`` must be a contiguous int64 vector; ``a`` is scratch for propensities.
    The two shipped layouts (SIR, SEIR) take unrolled paths that draw the same
    random numbers and apply the same selection rule as the generic loop.
    Returns the number of events fired.
    """
    layout = _layout(kinds, rate_index, src, partner, x.shape[0])
    if layout == 1:
        return _advance_sir(x, t, t_end, rates[0] / n, rates[1], state)
    if layout == 2:
        return _advance_seir(x, t, t_end, rates[0] / n, rates[2], rates[1], state)
    return _advance_generic(x, t, t_end, rates, kinds, rate_index, src, partner, stoich, n,
                            a, state)


@numba.njit(inline="always", cache=True)
def _layout(kinds, rate_index, src, partner, n_c):
    """1 for the standard SIR event table, 2 for SEIR, 0 otherwise."""
    if n_c == 3 and kinds.shape[0] == 2:
        if (kinds[0] == 0 and rate_index[0] == 0 and src[0] == 0 and partner[0] == 1
                and kinds[1] == 1 and rate_index[1] == 1 and src[1] == 1):
            return 1
    if n_c == 4 and kinds.shape[0] == 3:
        if (kinds[0] == 0 and rate_index[0] == 0 and src[0] == 0 and partner[0] == 2
                and kinds[1] == 1 and rate_index[1] == 2 and src[1] == 1
                and kinds[2] == 1 and rate_index[2] == 1 and src[2] == 2):
            return 2
    return 0


@numba.njit(cache=True)
def _run_events(x0, t0, t_end, rates, kinds, rate_index, src, partner, stoich, n, seed):
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    n_c = x0.shape[0]
    cap = 1024
    times = np.empty(cap)
    states = np.empty((cap, n_c), dtype=np.int64)
    events = np.empty(cap, dtype=np.int64)
    a = np.empty(kinds.shape[0])
    x = x0.copy()
    times[0] = t0
    states[0] = x
    events[0] = -1
    k = 1
    t = t0
    while True:
        total = _propensities(x, rates, kinds, rate_index, src, partner, n, a)
        if total <= 0.0:
            break
        t_next = t - math.log(_rng.uniform_open(state)) / total
        if t_next > t_end:
            break
        j = _pick_event(a, total, _rng.uniform(state))
        t = t_next
        for c in range(n_c):
            x[c] += stoich[j, c]
        if k + 1 >= cap:
            cap *= 2
            times2 = np.empty(cap)
            states2 = np.empty((cap, n_c), dtype=np.int64)
            events2 = np.empty(cap, dtype=np.int64)
            times2[:k] = times[:k]
            states2[:k] = states[:k]
            events2[:k] = events[:k]
            times, states, events = times2, states2, events2
        times[k] = t
        states[k] = x
        events[k] = j
        k += 1
    if times[k - 1] < t_end:
        times[k] = t_end
        states[k] = x
        events[k] = -1
        k += 1
    return times[:k].copy(), states[:k].copy(), events[:k].copy()


@numba.njit(cache=True, fastmath=_rng.FASTMATH)
def _propagate_many(x, dt, rates, kinds, rate_index, src, partner, stoich, n, seeds):
    """Advance every row of ``x`` by ``dt``; row ``i`` uses stream ``seeds[i]``."""
    a = np.empty(kinds.shape[0])
    xl = np.empty(x.shape[1], dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    for i in range(x.shape[0]):
        state[0] = seeds[i]
        xl[:] = x[i]
        _advance(xl, 0.0, dt, rates, kinds, rate_index, src, partner, stoich, n, a, state)
        x[i] = xl


@numba.njit(cache=True)
def _simulate_grid(x0, t_grid, rates, kinds, rate_index, src, partner, stoich, n, state):
    """State holding at each grid time, starting from ``x0`` at ``t_grid[0]``."""
    out = np.empty((t_grid.shape[0], x0.shape[0]), dtype=np.int64)
    a = np.empty(kinds.shape[0])
    x = x0.copy()
    out[0] = x
    for g in range(1, t_grid.shape[0]):
        _advance(x, t_grid[g - 1], t_grid[g], rates, kinds, rate_index, src, partner,
                 stoich, n, a, state)
        out[g] = x
    return out


def _model_arrays(spec, params):
    spec.check_params(params)
    return (params.rates(), spec.kinds, spec.rate_index, spec.src, spec.partner,
            spec.stoichiometry, float(spec.population))


def _int_state(spec, state):
    counts = np.asarray(state)
    if not np.issubdtype(counts.dtype, np.integer):
        if not np.all(counts == np.round(counts)):
            raise ValueError("stochastic simulation needs integer counts")
    return spec.check_state(counts).astype(np.int64)


def gillespie_run(spec, params, init, t0, t_end, rng=None):
    """Simulate one event-resolved path on ``[t0, t_end]``.

    Waiting times are ``-log(r1) / sum(a)`` with ``r1`` uniform on the open
    interval (0, 1); the firing event is the first whose propensity prefix
    sum exceeds ``r2 * sum(a)``.  The path stops at absorption or when the
    next event would fall after ``t_end``; the last row is stamped ``t_end``.

    Returns
    -------
    Trajectory
        ``kind="event"``; ``events`` holds the index of the event that led
        to each row (-1 for the start and end rows).
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    x0 = _int_state(spec, init)
    seed = np.uint64(as_seed(rng))
    times, states, events = _run_events(x0, float(t0), float(t_end),
                                        *_model_arrays(spec, params), seed)
    return Trajectory(times, states, spec.compartments, "event", events)


def gillespie_propagate(spec, params, state, dt, rng=None):
    """Advance ``state`` by exactly ``dt`` time units and return the new counts."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = _int_state(spec, state).reshape(1, -1).copy()
    seeds = np.array([as_seed(rng)], dtype=np.uint64)
    _propagate_many(x, float(dt), *_model_arrays(spec, params), seeds)
    return x[0]


def propagate_batch(spec, params, states, dt, seed):
    """Advance each row of ``states`` by ``dt`` on its own sub-stream of ``seed``.

    Row ``i`` draws from ``substream(seed, i, 0)``, so the result for a row
    does not depend on how many rows are in the batch.
    """
    x = np.array(states, dtype=np.int64, copy=True)
    seeds = np.array([_rng.substream(np.uint64(seed), i, 0) for i in range(len(x))],
                     dtype=np.uint64)
    _propagate_many(x, float(dt), *_model_arrays(spec, params), seeds)
    return x


def simulate_on_grid(spec, params, init, t_grid, rng=None):
    """Simulate one path and report the state holding at each time of ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    x0 = _int_state(spec, init)
    state = _rng.new_state(np.uint64(as_seed(rng)))
    states = _simulate_grid(x0, t_grid, *_model_arrays(spec, params), state)
    return Trajectory(t_grid, states, spec.compartments, "grid")
