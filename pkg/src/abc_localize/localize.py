"""Two-stage marginal estimation: a pilot SMC-ABC run on the full
summaries localises the posterior crudely; a continuation then shrinks
the tolerance on the parameter's designated summary subset while
permanently enforcing the pilot tolerance.

The continuation therefore samples the product of the two indicator
kernels, which is also the logarithmic pool of the two single-kernel
posteriors for any interior pooling weight (``log_pool_indicator_check``
makes that identity testable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    DistanceMetric,
    Population,
    RandomStream,
    SummaryVector,
    indicator_kernel,
)
from .smc import MatchSpec, SmcConfig, SmcTrace, StoppingRule, run_replenishment, smc_abc
from .summaries import SummarySet


@dataclass(frozen=True)
class LocalizeConfig:
    """Acceptance-rate thresholds for the pilot and continued runs.

    The pilot threshold must be much larger than the final one: the
    pilot only needs to eliminate clearly wrong parameter regions, and an
    overly tight pilot tolerance makes the continuation's joint matching
    computationally hard.
    """

    pilot_acc_threshold: float = 0.15
    final_acc_threshold: float = 0.01
    param: str = ""

    def __post_init__(self):
        if not 0.0 < self.final_acc_threshold < self.pilot_acc_threshold <= 1.0:
            raise ValueError(
                "need 0 < final_acc_threshold < pilot_acc_threshold <= 1, got "
                f"({self.final_acc_threshold}, {self.pilot_acc_threshold})"
            )


def pilot_run(
    model,
    summary_fn: Callable[[np.ndarray], np.ndarray],
    observed: SummaryVector,
    metric: DistanceMetric,
    config: SmcConfig,
    p0: float,
    stream: RandomStream,
) -> tuple[Population, float, SmcTrace]:
    """SMC-ABC on the full summaries stopped early, at MCMC acceptance
    rate ``p0``.  Returns the pilot population, its tolerance and the
    trace."""
    pop, trace = smc_abc(
        model,
        summary_fn,
        observed,
        metric,
        config,
        stream,
        stop=StoppingRule(acc_rate=p0),
    )
    return pop, float(pop.epsilon_full), trace


def attach_marginal_discrepancies(
    pop: Population,
    summary_set: SummarySet,
    param: str,
    observed: SummaryVector,
) -> tuple[Population, float]:
    """Add per-particle discrepancies on the parameter's summary subset.

    The initial marginal tolerance is the population maximum, so every
    particle trivially satisfies it; recomputing from the stored
    summaries reproduces the stored values bit for bit.
    """
    idx = summary_set.indices_for(param)
    sub_metric = pop.metric.restrict(idx)
    obs_sub = observed.values[idx]
    rho_j = np.array([sub_metric.evaluate(s[idx], obs_sub) for s in pop.summaries])
    eps_j = float(rho_j.max())
    out = replace(
        pop.copy(),
        rho_marginal=rho_j,
        epsilon_marginal=eps_j,
        marginal_param=param,
    )
    return out, eps_j


def marginal_continue(
    pop: Population,
    epsilon0: float,
    model,
    summary_fn: Callable[[np.ndarray], np.ndarray],
    summary_set: SummarySet,
    param: str,
    observed: SummaryVector,
    metric: DistanceMetric,
    config: SmcConfig,
    p_j: float,
    stream: RandomStream,
) -> tuple[Population, SmcTrace]:
    """Continue SMC-ABC from the pilot population, reducing only the
    marginal tolerance while every move must still satisfy the frozen
    full-summary tolerance ``epsilon0``.

    A proposal that matches the current marginal tolerance but violates
    ``epsilon0`` is rejected.  With ``epsilon0 = inf`` the full-summary
    indicator is always 1 and the continuation reduces exactly to
    marginal-only SMC-ABC.  The proposal covariance adapts to the current
    (localised) population, not the pilot one.
    """
    if pop.marginal_param != param or pop.rho_marginal is None:
        raise ValueError(
            f"population carries no marginal discrepancies for {param!r}; "
            "run attach_marginal_discrepancies first"
        )
    if not np.all(pop.rho_full <= epsilon0):
        raise ValueError("pilot population violates the frozen tolerance epsilon0")
    idx = np.asarray(summary_set.indices_for(param), dtype=np.intp)
    d = len(summary_set.full)
    if observed.names != summary_set.full:
        raise ValueError("observed summary names do not match the summary set")
    full_spec = MatchSpec(
        name="full",
        indices=np.arange(d),
        observed=observed.values,
        metric=metric,
        epsilon=float(epsilon0),
        adaptive=False,
    )
    marg_spec = MatchSpec(
        name=param,
        indices=idx,
        observed=observed.values[idx],
        metric=metric.restrict(idx),
        epsilon=float(pop.epsilon_marginal),
        adaptive=True,
    )
    thetas = pop.thetas.copy()
    summaries = pop.summaries.copy()
    rho = np.column_stack([pop.rho_full, pop.rho_marginal])
    result = run_replenishment(
        model,
        summary_fn,
        [full_spec, marg_spec],
        thetas,
        summaries,
        rho,
        config,
        stop_acc_rate=p_j,
        max_simulations=config.max_simulations,
        stream=stream,
        simulations_used=0,
    )
    out = Population(
        param_names=tuple(model.param_names),
        summary_names=observed.names,
        thetas=result.thetas,
        summaries=result.summaries,
        rho_full=result.rho[:, 0],
        epsilon_full=float(epsilon0),
        metric=metric,
        seed_lineage=stream,
        rho_marginal=result.rho[:, 1],
        epsilon_marginal=float(result.epsilons[1]),
        marginal_param=param,
    )
    return out, result.trace


def log_pool_indicator_check(
    rho_full: float,
    eps0: float,
    rho_j: float,
    eps_j: float,
    alpha: float,
) -> int:
    """Product of the two tolerance indicators, i.e. the log-pooled
    indicator-kernel density up to normalisation.

    ``alpha`` must be strictly interior; the output does not depend on it
    (0^a = 0 and 1^a = 1 for any a in (0,1)), which is exactly why the
    pooling weights do not influence the two-stage target.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"pooling weight must be strictly inside (0,1), got {alpha}")
    return indicator_kernel(rho_full, eps0) * indicator_kernel(rho_j, eps_j)
