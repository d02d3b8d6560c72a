"""Stochastic SIR/SEIR epidemics: Gillespie simulation, particle filtering,
PMMH and ABC inference, and chain diagnostics."""

from .config import load_config, load_scenario, scenario_ids
from .diagnostics import (burn_thin, effective_sample_size, gelman_rubin, hpd_interval, pmse,
                          summarize, trajectory_bands)
from .estimators import ABCSampler, PMMHSampler, check_observed
from .exceptions import (ConfigError, EmptyChainError, EpsilonTooSmallError, FilterFailureError,
                         NoPathError, ParseError, StochEpiError, TuningError)
from .gillespie import gillespie_propagate, gillespie_run, simulate_on_grid
from .inference import (AbcConfig, Chain, Prior, Proposal, abc_rejection, mh_acceptance,
                        pilot_tune, pmmh_run)
from .models import (ModelSpec, Params, Trajectory, basic_reproduction_number,
                     integrate_deterministic, make_spec, seir_spec, sir_spec)
from .observation import ObservationModel, ObservedSeries, simulate_series
from .smc import ParticleSystem, log_likelihood, particle_filter, sample_path

__version__ = "0.1.0"
