"""Metropolis-Hastings building blocks: priors, proposals, acceptance, chains."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..exceptions import TuningError

logger = logging.getLogger(__name__)

JITTER = 1e-12


@dataclass(frozen=True)
class Prior:
    """Independent prior on a parameter vector.

    ``kind="uniform"`` is a proper product of ``Uniform(lower, upper)``.
    ``kind="flat"`` has density proportional to 1 on the open box
    ``(lower, upper)``; with the default bounds that is the positive orthant.
    Upper bounds are inclusive for ``flat`` so ``p_obs = 1`` stays admissible.
    """

    kind: str
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be 1-d and the same length")
        if np.any(lower >= upper):
            raise ValueError("prior bounds need lower < upper")
        if self.kind == "uniform" and not np.all(np.isfinite(upper - lower)):
            raise ValueError("uniform prior needs finite bounds")
        if self.kind not in ("uniform", "flat"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, lower, upper):
        return cls("uniform", lower, upper)

    @classmethod
    def flat_positive(cls, dim, upper=None):
        upper = np.full(dim, np.inf) if upper is None else upper
        return cls("flat", np.zeros(dim), upper)

    @property
    def dim(self):
        return self.lower.shape[0]

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "flat":
            return bool(np.all(theta > self.lower) and np.all(theta <= self.upper))
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def log_density(self, theta):
        if not self.contains(theta):
            return -np.inf
        if self.kind == "flat":
            return 0.0
        return float(-np.sum(np.log(self.upper - self.lower)))

    def sample(self, rng, size=None):
        if self.kind != "uniform":
            raise ValueError("cannot sample from an improper flat prior")
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.lower + (self.upper - self.lower) * rng.random(shape)


@dataclass(frozen=True)
class Proposal:
    """Gaussian random-walk proposal ``N(theta, h * sigma)``.

    In adaptive mode ``sigma`` is ignored: steps ``t <= t0`` use the
    identity, later steps use the sample covariance of all previous states
    plus ``epsilon * I``.
    """

    h: float
    sigma: np.ndarray
    mode: str = "fixed"
    t0: int = 1000
    epsilon: float = 1e-4

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape[0] != sigma.shape[1]:
            raise ValueError("sigma must be square")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("sigma must be symmetric")
        if self.h < 0:
            raise ValueError("h must be non-negative")
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown proposal mode {self.mode!r}")
        if self.mode == "adaptive" and (self.t0 < 1 or self.epsilon <= 0):
            raise ValueError("adaptive mode needs t0 >= 1 and epsilon > 0")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def default(cls, dim, sigma=None):
        """Untuned proposal with the optimal-scaling multiplier ``2.38**2 / d``."""
        return cls(2.38**2 / dim, np.eye(dim) if sigma is None else sigma)

    @property
    def dim(self):
        return self.sigma.shape[0]


def proposal_factor(cov):
    """Lower Cholesky factor of ``cov``, with jitter if it is only semidefinite."""
    cov = np.asarray(cov, dtype=float)
    scale = max(1.0, float(np.abs(np.diag(cov)).max(initial=0.0)))
    for jitter in (0.0, JITTER * scale, 1e-9 * scale, 1e-6 * scale):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise TuningError("proposal covariance is not positive semidefinite")


def propose(current, proposal, rng, cov=None):
    """Draw ``theta' ~ N(current, h * cov)``; ``cov`` defaults to ``proposal.sigma``.

    The kernel is symmetric, so the Hastings correction is zero.
    """
    current = np.asarray(current, dtype=float)
    cov = proposal.sigma if cov is None else cov
    if current.shape != (cov.shape[0],):
        raise ValueError("theta and proposal covariance dimensions differ")
    if proposal.h == 0:
        return current.copy()
    factor = proposal_factor(cov)
    return current + math.sqrt(proposal.h) * factor @ rng.standard_normal(current.shape[0])


def proposal_log_density(to, frm, h, cov):
    """Log density of moving ``frm -> to`` under ``N(frm, h * cov)``."""
    diff = np.asarray(to, dtype=float) - np.asarray(frm, dtype=float)
    factor = proposal_factor(h * np.asarray(cov))
    z = np.linalg.solve(factor, diff)
    return float(-0.5 * z @ z - np.log(np.diag(factor)).sum() - 0.5 * len(diff) * np.log(2 * np.pi))


def mh_acceptance(log_target_new, log_target_old, log_hastings_correction=0.0):
    """``min(1, exp(new - old + correction))`` on extended reals.

    A proposal with zero target is never accepted; a finite proposal from a
    zero-target state always is.  When both are zero the chain stays put and
    a warning is logged.
    """
    if log_target_new == -np.inf:
        if log_target_old == -np.inf:
            logger.warning("both current and proposed targets are zero; staying put")
        return 0.0
    if log_target_old == -np.inf:
        return 1.0
    log_ratio = log_target_new - log_target_old + log_hastings_correction
    if log_ratio >= 0:
        return 1.0
    return math.exp(log_ratio)


@dataclass
class Chain:
    """Samples ``theta_0 .. theta_n`` of one MH run.

    Row 0 is the starting point (``accepted[0]`` is False by convention);
    rejected rows repeat the previous sample.  ``proposal_covs[t]`` is the
    covariance (before scaling by ``h``) used to propose row ``t``.
    """

    names: tuple
    samples: np.ndarray
    log_target: np.ndarray
    accepted: np.ndarray
    h: float = float("nan")
    proposal_covs: Optional[np.ndarray] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not len(self.samples) == len(self.log_target) == len(self.accepted):
            raise ValueError("samples, log_target and accepted must have equal length")

    def __len__(self):
        return len(self.samples)

    @property
    def acceptance_rate(self):
        if len(self.accepted) < 2:
            return float("nan")
        return float(np.mean(self.accepted[1:]))

    def column(self, name):
        return self.samples[:, self.names.index(name)]
