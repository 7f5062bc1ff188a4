"""Likelihood-free Bayesian inference with SMC-ABC and pilot-localised
marginal posterior estimation."""

from .core import (
    DistanceMetric,
    ParamVector,
    Particle,
    Population,
    RandomStream,
    SummaryVector,
    distance,
    indicator_kernel,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .localize import (
    LocalizeConfig,
    attach_marginal_discrepancies,
    log_pool_indicator_check,
    marginal_continue,
    pilot_run,
)
from .smc import SmcConfig, SmcTrace, StoppingRule, adaptive_repeats, mcmc_move, smc_abc
from .summaries import SummarySet

__version__ = "0.1.0"

__all__ = [
    "DistanceMetric",
    "KERNEL_BACKEND",
    "LocalizeConfig",
    "ParamVector",
    "Particle",
    "Population",
    "RandomStream",
    "SmcConfig",
    "SmcTrace",
    "StoppingRule",
    "SummarySet",
    "SummaryVector",
    "adaptive_repeats",
    "attach_marginal_discrepancies",
    "distance",
    "indicator_kernel",
    "log_pool_indicator_check",
    "marginal_continue",
    "mcmc_move",
    "pilot_run",
    "smc_abc",
    "__version__",
]
