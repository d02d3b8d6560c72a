"""Compartmental model definitions shared by the simulators and samplers.

A :class:`ModelSpec` describes a closed population as a set of events.  Each
event has a propensity of one of two shapes,

* frequency-dependent contact: ``rate * x[a] * x[b] / N``
* linear outflow: ``rate * x[a]``

and an integer stoichiometry (change) vector.  The same arrays drive the
Gillespie kernels, the deterministic RK4 integrator and the particle filter.
"""

from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .exceptions import InvalidGridError, InvalidParameterError, InvalidPopulationError

CONTACT = 0
LINEAR = 1

PARAM_NAMES = ("beta", "gamma", "alpha")

DEFAULT_ODE_STEP = 0.001


@dataclass(frozen=True)
class Params:
    """Epidemic rates. ``alpha`` is the latency-exit rate (SEIR only)."""

    beta: float
    gamma: float
    alpha: Optional[float] = None
    p_obs: Optional[float] = None

    def __post_init__(self):
        for name in ("beta", "gamma"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidParameterError(f"{name} must be > 0, got {value!r}")
        if self.alpha is not None and (not np.isfinite(self.alpha) or self.alpha <= 0):
            raise InvalidParameterError(f"alpha must be > 0, got {self.alpha!r}")
        if self.p_obs is not None and not 0 < self.p_obs <= 1:
            raise InvalidParameterError(f"p_obs must lie in (0, 1], got {self.p_obs!r}")

    def rates(self):
        """Rate vector indexed like ``PARAM_NAMES``; a missing alpha is 0."""
        return np.array(
            [self.beta, self.gamma, 0.0 if self.alpha is None else self.alpha],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class ModelSpec:
    name: str
    compartments: tuple
    population: int
    kinds: np.ndarray = field(repr=False)
    rate_index: np.ndarray = field(repr=False)
    src: np.ndarray = field(repr=False)
    partner: np.ndarray = field(repr=False)
    stoichiometry: np.ndarray = field(repr=False)
    frequency_dependent: bool = True

    def __post_init__(self):
        n_events = len(self.kinds)
        if not (len(self.rate_index) == len(self.src) == len(self.partner) == n_events):
            raise ValueError("propensity arrays must have one entry per event")
        if self.stoichiometry.shape != (n_events, len(self.compartments)):
            raise ValueError("stoichiometry must be (n_events, n_compartments)")
        if np.any(self.stoichiometry.sum(axis=1) != 0):
            raise ValueError("stoichiometry vectors must sum to zero in a closed system")
        for arr in (self.kinds, self.rate_index, self.src, self.partner, self.stoichiometry):
            arr.setflags(write=False)

    @property
    def n_compartments(self):
        return len(self.compartments)

    @property
    def n_events(self):
        return len(self.kinds)

    @property
    def required_params(self):
        return tuple(sorted({PARAM_NAMES[i] for i in self.rate_index}, key=PARAM_NAMES.index))

    def check_params(self, params):
        if "alpha" in self.required_params and params.alpha is None:
            raise InvalidParameterError(f"{self.name} model needs alpha")
        return params

    def check_state(self, counts):
        counts = np.asarray(counts)
        if counts.shape != (self.n_compartments,):
            raise ValueError(
                f"state must have {self.n_compartments} entries ({', '.join(self.compartments)})"
            )
        if np.any(counts < 0):
            raise ValueError("compartment counts must be non-negative")
        if not np.isclose(counts.sum(), self.population, rtol=0, atol=1e-6 * self.population):
            raise ValueError(f"state sums to {counts.sum()}, population is {self.population}")
        return counts

    def propensities(self, counts, params):
        """Event rates at ``counts``."""
        self.check_params(params)
        x = np.asarray(counts, dtype=np.float64)
        out = np.empty(self.n_events)
        _propensities(x, params.rates(), self.kinds, self.rate_index, self.src,
                      self.partner, float(self.population), out)
        return out


def _spec(name, compartments, population, events):
    if population < 1:
        raise InvalidPopulationError(f"population must be >= 1, got {population}")
    kinds, rate_index, src, partner, stoich = zip(*events)
    return ModelSpec(
        name=name,
        compartments=compartments,
        population=int(population),
        kinds=np.array(kinds, dtype=np.int64),
        rate_index=np.array(rate_index, dtype=np.int64),
        src=np.array(src, dtype=np.int64),
        partner=np.array(partner, dtype=np.int64),
        stoichiometry=np.array(stoich, dtype=np.int64),
    )


def sir_spec(population):
    """SIR: infection ``beta*S*I/N`` and removal ``gamma*I``."""
    return _spec("sir", ("S", "I", "R"), population, [
        (CONTACT, 0, 0, 1, (-1, 1, 0)),
        (LINEAR, 1, 1, 1, (0, -1, 1)),
    ])


def seir_spec(population):
    """SEIR: exposure ``beta*S*I/N``, progression ``alpha*E``, removal ``gamma*I``.

    Compartment order is (S, E, I, R).
    """
    return _spec("seir", ("S", "E", "I", "R"), population, [
        (CONTACT, 0, 0, 2, (-1, 1, 0, 0)),
        (LINEAR, 2, 1, 1, (0, -1, 1, 0)),
        (LINEAR, 1, 2, 2, (0, 0, -1, 1)),
    ])


def make_spec(model, population):
    try:
        factory = {"sir": sir_spec, "seir": seir_spec}[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}; expected 'sir' or 'seir'") from None
    return factory(population)


def basic_reproduction_number(params, spec=None):
    """``beta / gamma``.

    With the ``/N`` contact scaling used throughout, this is the threshold
    quantity: the epidemic takes off from a small seed iff it exceeds 1.
    Latency (alpha) does not change it.
    """
    if spec is not None:
        spec.check_params(params)
    return params.beta / params.gamma


@dataclass(frozen=True)
class Trajectory:
    """Compartment counts over time.

    ``kind`` is ``"event"`` for jump-resolved Gillespie output and ``"grid"``
    for values sampled on a fixed time grid.
    """

    times: np.ndarray
    states: np.ndarray
    compartments: tuple
    kind: str = "grid"
    events: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.states.shape != (len(self.times), len(self.compartments)):
            raise ValueError("states must be (n_times, n_compartments)")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def __getitem__(self, name):
        return self.states[:, self.compartments.index(name)]

    def at(self, t_grid):
        """State holding at each time in ``t_grid`` (right-continuous)."""
        idx = np.searchsorted(self.times, t_grid, side="right") - 1
        if np.any(idx < 0):
            raise ValueError("grid starts before the trajectory")
        return Trajectory(np.asarray(t_grid, dtype=float), self.states[idx],
                          self.compartments, "grid")


@numba.njit(cache=True)
def _propensities(x, rates, kinds, rate_index, src, partner, n, out):
    total = 0.0
    for j in range(kinds.shape[0]):
        if kinds[j] == 0:
            a = rates[rate_index[j]] * x[src[j]] * x[partner[j]] / n
        else:
            a = rates[rate_index[j]] * x[src[j]]
        out[j] = a
        total += a
    return total


@numba.njit(cache=True)
def _rhs(x, rates, kinds, rate_index, src, partner, stoich, n, a, dx):
    _propensities(x, rates, kinds, rate_index, src, partner, n, a)
    dx[:] = 0.0
    for j in range(kinds.shape[0]):
        for c in range(x.shape[0]):
            dx[c] += a[j] * stoich[j, c]


@numba.njit(cache=True)
def _rk4_grid(x0, t_grid, step, rates, kinds, rate_index, src, partner, stoich, n):
    n_c = x0.shape[0]
    out = np.empty((t_grid.shape[0], n_c))
    x = x0.copy()
    out[0] = x
    a = np.empty(kinds.shape[0])
    k1 = np.empty(n_c)
    k2 = np.empty(n_c)
    k3 = np.empty(n_c)
    k4 = np.empty(n_c)
    tmp = np.empty(n_c)
    for g in range(1, t_grid.shape[0]):
        gap = t_grid[g] - t_grid[g - 1]
        n_sub = int(np.ceil(gap / step - 1e-9))
        h = gap / n_sub
        for _ in range(n_sub):
            _rhs(x, rates, kinds, rate_index, src, partner, stoich, n, a, k1)
            for c in range(n_c):
                tmp[c] = x[c] + 0.5 * h * k1[c]
            _rhs(tmp, rates, kinds, rate_index, src, partner, stoich, n, a, k2)
            for c in range(n_c):
                tmp[c] = x[c] + 0.5 * h * k2[c]
            _rhs(tmp, rates, kinds, rate_index, src, partner, stoich, n, a, k3)
            for c in range(n_c):
                tmp[c] = x[c] + h * k3[c]
            _rhs(tmp, rates, kinds, rate_index, src, partner, stoich, n, a, k4)
            for c in range(n_c):
                x[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
        out[g] = x
    return out


def integrate_deterministic(spec, params, init, t_grid, step=DEFAULT_ODE_STEP):
    """Solve the mean-field ODE with fixed-step RK4 and sample it on ``t_grid``.

    The first grid point is the initial time.  Each gap is split into
    ``ceil(gap / step)`` equal sub-steps, so grid points are hit exactly.
    """
    spec.check_params(params)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise InvalidGridError("time grid must be a non-empty 1-d array")
    if np.any(np.diff(t_grid) <= 0):
        raise InvalidGridError("time grid must be strictly increasing")
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = spec.check_state(init).astype(np.float64)
    states = _rk4_grid(x0, t_grid, float(step), params.rates(), spec.kinds, spec.rate_index,
                       spec.src, spec.partner, spec.stoichiometry, float(spec.population))
    return Trajectory(t_grid, states, spec.compartments, "grid")
