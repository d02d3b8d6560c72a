"""Counter-style random streams shared by the compiled kernels.

Every stochastic kernel draws from SplitMix64 streams whose seed is a pure
function of ``(master seed, purpose, chain, step, particle)``.  Nothing depends
on thread scheduling, so results are bit-identical for any worker count.

Python-side fan-out (``child_seed``) uses BLAKE2b over the textual key so
the derivation is easy to reproduce from other languages.
"""

import hashlib
import math

import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

# fast-math without the no-nan/no-inf assumptions; -inf log weights must survive
FASTMATH = {"nsz", "arcp", "contract", "afn", "reassoc"}

# purpose tags for substreams
FILTER = 1
PROPOSE = 2
ACCEPT = 3
ABC = 4
OBSERVE = 5
BANDS = 6
RESAMPLE = 7
SIMULATE = 8


def child_seed(master, role, index=0):
    """Derive a 64-bit child seed from ``(master, role, index)``.

    The key is the ASCII string ``"{master}:{role}:{index}"`` hashed with
    8-byte BLAKE2b, read little-endian.
    """
    key = f"{int(master)}:{role}:{int(index)}".encode("ascii")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def as_seed(rng):
    """Turn ``None``, an int or a ``numpy.random.Generator`` into a uint64 seed."""
    if rng is None:
        return int(np.random.default_rng().integers(0, 2**63))
    if isinstance(rng, (int, np.integer)):
        if rng < 0:
            raise ValueError("seed must be non-negative")
        return int(rng) & 0xFFFFFFFFFFFFFFFF
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**64, dtype=np.uint64))
    raise TypeError(f"cannot derive a seed from {type(rng).__name__}")


@numba.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True)
def substream(seed, a, b):
    """Seed of sub-stream ``(a, b)`` under ``seed``."""
    z = mix64(np.uint64(seed) + _GOLDEN)
    z = mix64(z ^ (np.uint64(a) * _GOLDEN + _M1))
    return mix64(z ^ (np.uint64(b) * _GOLDEN + _M2))


@numba.njit(inline="always", cache=True)
def next_u64(state):
    """Advance a one-element uint64 state array, return the next output."""
    state[0] += _GOLDEN
    return mix64(state[0])


@numba.njit(inline="always", cache=True)
def uniform_open0(state):
    """Uniform draw on (0, 1]; never exactly 0 so ``log`` stays finite."""
    return float((next_u64(state) >> _S11) + np.uint64(1)) * _TWO_M53


@numba.njit(inline="always", cache=True)
def uniform_open(state):
    """Uniform draw on (0, 1), both ends excluded (grid midpoints)."""
    return (float(next_u64(state) >> _S11) + 0.5) * _TWO_M53


@numba.njit(inline="always", cache=True)
def uniform(state):
    """Uniform draw on [0, 1)."""
    return float(next_u64(state) >> _S11) * _TWO_M53


@numba.njit(cache=True)
def normal(state):
    # Box-Muller, one output per call
    u1 = uniform_open0(state)
    u2 = uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def new_state(seed):
    return np.array([seed], dtype=np.uint64)
