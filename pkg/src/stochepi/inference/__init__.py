"""Samplers: Metropolis-Hastings pieces, PMMH with pilot tuning, and ABC rejection."""

from .abc import AbcConfig, AbcResult, abc_rejection
from .mh import Chain, Prior, Proposal, mh_acceptance, propose
from .pmmh import ParameterMap, TuningResult, pilot_tune, pmmh_run

__all__ = ["AbcConfig", "AbcResult", "abc_rejection", "Chain", "Prior", "Proposal",
           "mh_acceptance", "propose", "ParameterMap", "TuningResult", "pilot_tune", "pmmh_run"]
