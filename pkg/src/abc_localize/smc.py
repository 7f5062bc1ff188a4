"""Sequential Monte Carlo ABC with adaptive tolerances.

The sampler maintains N equally-weighted particles.  Each iteration
eliminates the ``drop_fraction`` of particles with the highest
discrepancy (which defines the next tolerance), refills the population
by uniform resampling of the survivors, and diversifies the refilled
particles with Metropolis-Hastings moves whose repeat count adapts to
the observed acceptance rate.  The run stops when the pooled MCMC
acceptance rate falls to the stopping threshold or the simulation budget
is exhausted.

Moves for distinct particles are independent given their own random
streams (keyed by iteration and particle slot), so the move sweep can be
executed by a thread pool while reproducing the sequential result
exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    PHASE_INIT,
    PHASE_MOVE,
    PHASE_RESAMPLE,
    DistanceMetric,
    Particle,
    ParamVector,
    Population,
    RandomStream,
    SummaryVector,
)

# Exceptions from a summary function that mark a simulated dataset as
# unusable (degenerate sample, non-convergent fit).  Treated as a miss,
# not an error: such a dataset can never match the observed summaries.
SUMMARY_FAILURES = (ValueError, RuntimeError, np.linalg.LinAlgError)


def default_threads() -> int:
    env = os.environ.get("ABC_LOCALIZE_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return 1


@dataclass
class SmcConfig:
    """Sampler settings.

    ``mcmc_target_miss`` is the probability that a particle moves in none
    of its MCMC repeats; the repeat count is chosen to push the miss
    probability below it.  ``r_max`` bounds the repeats so a collapsing
    acceptance rate cannot blow up the per-iteration cost.
    """

    n_particles: int = 1000
    drop_fraction: float = 0.5
    mcmc_target_miss: float = 0.01
    stop_acc_rate: float = 0.01
    max_simulations: int = 2_000_000
    r_max: int = 100
    proposal_scale: float = 1.0  # multiplier on the survivors' covariance
    threads: int = 0  # 0 -> ABC_LOCALIZE_THREADS or single-threaded

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("need at least two particles")
        if not 0.0 < self.drop_fraction < 1.0:
            raise ValueError("drop_fraction must be in (0,1)")
        if self.n_particles * self.drop_fraction < 1.0:
            raise ValueError("drop_fraction eliminates less than one particle")
        if not 0.0 < self.mcmc_target_miss < 1.0:
            raise ValueError("mcmc_target_miss must be in (0,1)")
        if not 0.0 < self.stop_acc_rate <= 1.0:
            raise ValueError("stop_acc_rate must be in (0,1]")
        if self.max_simulations < 1:
            raise ValueError("max_simulations must be positive")
        if self.r_max < 1:
            raise ValueError("r_max must be positive")

    @property
    def n_drop(self) -> int:
        return int(round(self.n_particles * self.drop_fraction))

    def effective_threads(self) -> int:
        return self.threads if self.threads >= 1 else default_threads()


@dataclass(frozen=True)
class StoppingRule:
    """Optional overrides of the config's stopping parameters."""

    acc_rate: Optional[float] = None
    max_simulations: Optional[int] = None


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    epsilon: float
    acc_rate: float
    repeats: int
    cumulative_simulations: int
    repeats_clamped: bool


@dataclass
class SmcTrace:
    """Per-iteration progress records; epsilon is nonincreasing."""

    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""

    def append(self, rec: IterationRecord) -> None:
        if self.records and rec.epsilon > self.records[-1].epsilon:
            raise AssertionError("tolerance increased across iterations")
        self.records.append(rec)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.records])

    @property
    def total_simulations(self) -> int:
        return self.records[-1].cumulative_simulations if self.records else 0


def adaptive_repeats(acc_rate: float, target_miss: float = 0.01, r_max: int = 100) -> int:
    """MCMC repeats so that P(particle never moves) <= target_miss.

    ceil(log target_miss / log(1 - acc_rate)), clamped to [1, r_max];
    acc_rate >= 1 needs a single repeat, acc_rate <= 0 pins the clamp.
    """
    if not 0.0 < target_miss < 1.0:
        raise ValueError("target_miss must be in (0,1)")
    if acc_rate >= 1.0:
        return 1
    if acc_rate <= 0.0:
        return r_max
    raw = math.ceil(math.log(target_miss) / math.log1p(-acc_rate))
    return min(max(raw, 1), r_max)


@dataclass
class MatchSpec:
    """One tolerance constraint: a summary subset, its observed values,
    the (restricted) metric, and the current tolerance."""

    name: str
    indices: np.ndarray
    observed: np.ndarray
    metric: DistanceMetric
    epsilon: float = math.inf
    adaptive: bool = False

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.intp)
        self.observed = np.asarray(self.observed, dtype=np.float64)
        if self.indices.shape != self.observed.shape:
            raise ValueError("indices and observed subvector disagree in length")

    def rho(self, summary_values: np.ndarray) -> float:
        return self.metric.evaluate(summary_values[self.indices], self.observed)


@dataclass
class SmcRunResult:
    thetas: np.ndarray
    summaries: np.ndarray
    rho: np.ndarray  # (N, n_constraints)
    epsilons: np.ndarray  # final tolerance per constraint
    trace: SmcTrace
    simulations_used: int


def _simulate_summaries(model, summary_fn, theta, gen) -> Optional[np.ndarray]:
    """One model simulation + summaries; None marks an unusable dataset."""
    x = model.simulate(theta, gen)
    try:
        s = np.asarray(summary_fn(x), dtype=np.float64)
    except SUMMARY_FAILURES:
        return None
    if not np.all(np.isfinite(s)):
        return None
    return s


def _attempt_move(
    thetas: np.ndarray,
    summaries: np.ndarray,
    rho: np.ndarray,
    i: int,
    gen: np.random.Generator,
    chol: np.ndarray,
    constraints: Sequence[MatchSpec],
    model,
    summary_fn,
) -> tuple[bool, int]:
    """One MH attempt on particle slot ``i``; returns (accepted, sims).

    Proposals outside the prior support are rejected before simulating
    (they cost nothing); an accepted proposal must satisfy every active
    tolerance constraint.
    """
    p = thetas.shape[1]
    z = gen.standard_normal(p)
    prop = thetas[i] + chol @ z
    u = gen.uniform()
    logratio = model.prior_logpdf(prop) - model.prior_logpdf(thetas[i])
    if not (logratio >= 0.0 or u < math.exp(logratio)):
        return False, 0
    s = _simulate_summaries(model, summary_fn, prop, gen)
    if s is None:
        return False, 1
    new_rho = np.empty(len(constraints))
    for j, c in enumerate(constraints):
        new_rho[j] = c.rho(s)
        if not new_rho[j] <= c.epsilon:
            return False, 1
    thetas[i] = prop
    summaries[i] = s
    rho[i] = new_rho
    return True, 1


def mcmc_move(
    particle: Particle,
    constraints: Sequence[MatchSpec],
    proposal_cov: np.ndarray,
    model,
    summary_fn: Callable[[np.ndarray], np.ndarray],
    stream: RandomStream,
) -> tuple[Particle, bool]:
    """Single Metropolis-Hastings move of one particle on the indicator
    ABC target defined by ``constraints``.

    The first constraint fills the particle's rho_full slot and a second
    one, when present, the rho_marginal slot.  The returned particle
    satisfies every constraint whether or not the proposal was accepted.
    """
    if not 1 <= len(constraints) <= 2:
        raise ValueError("expected one or two tolerance constraints")
    thetas = particle.theta.values.copy()[None, :]
    summaries = particle.summaries.values.copy()[None, :]
    rho = np.array([[c.rho(particle.summaries.values) for c in constraints]])
    for j, c in enumerate(constraints):
        if not rho[0, j] <= c.epsilon:
            raise ValueError(f"particle violates constraint {c.name!r} before the move")
    chol = np.linalg.cholesky(np.asarray(proposal_cov, dtype=np.float64))
    accepted, _ = _attempt_move(
        thetas, summaries, rho, 0, stream.generator(), chol, constraints, model, summary_fn
    )
    out = Particle(
        ParamVector(thetas[0], particle.theta.names),
        SummaryVector(summaries[0], particle.summaries.names),
        float(rho[0, 0]),
        float(rho[0, 1]) if len(constraints) == 2 else None,
    )
    return out, accepted


def _safe_cholesky(cov: np.ndarray) -> np.ndarray:
    scale = max(float(np.mean(np.diag(cov))), 1e-300)
    eye = np.eye(cov.shape[0])
    for jitter in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            return np.linalg.cholesky(cov + jitter * scale * eye)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("proposal covariance is not positive definite")


def initialize_from_prior(
    model,
    summary_fn: Callable[[np.ndarray], np.ndarray],
    constraints: Sequence[MatchSpec],
    n_particles: int,
    stream: RandomStream,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Draw the starting population from the prior predictive.

    Draws whose summaries are degenerate are redrawn (within the same
    particle stream), each attempt counting against the budget.
    """
    p = len(model.param_names)
    first = None
    thetas = None
    summaries = None
    sims = 0
    for i in range(n_particles):
        gen = stream.child(PHASE_INIT, i).generator()
        for _ in range(1000):
            theta = np.asarray(model.prior_sample(gen), dtype=np.float64)
            sims += 1
            s = _simulate_summaries(model, summary_fn, theta, gen)
            if s is not None:
                break
        else:
            raise RuntimeError(
                "prior-predictive summaries degenerate for 1000 consecutive draws"
            )
        if thetas is None:
            thetas = np.empty((n_particles, p))
            summaries = np.empty((n_particles, s.shape[0]))
        thetas[i] = theta
        summaries[i] = s
    rho = np.empty((n_particles, len(constraints)))
    for j, c in enumerate(constraints):
        for i in range(n_particles):
            rho[i, j] = c.rho(summaries[i])
    return thetas, summaries, rho, sims


def run_replenishment(
    model,
    summary_fn: Callable[[np.ndarray], np.ndarray],
    constraints: list[MatchSpec],
    thetas: np.ndarray,
    summaries: np.ndarray,
    rho: np.ndarray,
    config: SmcConfig,
    stop_acc_rate: float,
    max_simulations: int,
    stream: RandomStream,
    simulations_used: int = 0,
) -> SmcRunResult:
    """Drive the eliminate/resample/move loop until the stopping rule
    fires.  Mutates the passed arrays in place and returns them."""
    adaptive = [j for j, c in enumerate(constraints) if c.adaptive]
    if len(adaptive) != 1:
        raise ValueError("exactly one constraint must be adaptive")
    a = adaptive[0]
    n = config.n_particles
    if thetas.shape[0] != n:
        raise ValueError(f"population has {thetas.shape[0]} particles, config says {n}")
    n_drop = config.n_drop
    n_keep = n - n_drop
    threads = config.effective_threads()
    trace = SmcTrace()
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def sweep(movers, gens, chol) -> tuple[int, int]:
        def work(chunk) -> tuple[int, int]:
            acc = sims = 0
            for i in chunk:
                ok, used = _attempt_move(
                    thetas, summaries, rho, i, gens[i], chol, constraints, model, summary_fn
                )
                acc += ok
                sims += used
            return acc, sims

        if executor is None:
            return work(movers)
        chunks = [c for c in np.array_split(movers, threads) if len(c)]
        acc = sims = 0
        for got in executor.map(work, chunks):
            acc += got[0]
            sims += got[1]
        return acc, sims

    try:
        iteration = 0
        stop_reason = ""
        while not stop_reason:
            iteration += 1
            order = np.argsort(rho[:, a], kind="stable")
            keep = order[:n_keep]
            drop = np.sort(order[n_keep:])
            eps = float(rho[keep[-1], a])
            constraints[a].epsilon = eps

            gen = stream.child(PHASE_RESAMPLE, iteration).generator()
            src = keep[gen.integers(0, n_keep, size=n_drop)]
            thetas[drop] = thetas[src]
            summaries[drop] = summaries[src]
            rho[drop] = rho[src]

            cov = config.proposal_scale * np.cov(thetas[keep], rowvar=False)
            cov = np.atleast_2d(cov)
            chol = _safe_cholesky(cov)

            gens = {
                int(i): stream.child(PHASE_MOVE, iteration, int(i)).generator() for i in drop
            }
            accepted = attempts = 0
            planned = 1
            done = 0
            clamped = False
            while done < planned:
                if simulations_used + n_drop > max_simulations:
                    stop_reason = "budget"
                    break
                acc_s, sims_s = sweep(drop, gens, chol)
                accepted += acc_s
                attempts += n_drop
                simulations_used += sims_s
                done += 1
                if done == 1:
                    rate = accepted / attempts
                    planned = adaptive_repeats(rate, config.mcmc_target_miss, config.r_max)
                    clamped = planned == config.r_max and (
                        rate <= 0.0
                        or adaptive_repeats(rate, config.mcmc_target_miss, 10**9) > config.r_max
                    )
            pooled = accepted / attempts if attempts else 0.0
            trace.append(
                IterationRecord(iteration, eps, pooled, done, simulations_used, clamped)
            )
            if not stop_reason and pooled <= stop_acc_rate:
                stop_reason = "acceptance"
    finally:
        if executor is not None:
            executor.shutdown(wait=False)

    trace.stop_reason = stop_reason
    return SmcRunResult(
        thetas=thetas,
        summaries=summaries,
        rho=rho,
        epsilons=np.array([c.epsilon for c in constraints]),
        trace=trace,
        simulations_used=simulations_used,
    )


def smc_abc(
    model,
    summary_fn: Callable[[np.ndarray], np.ndarray],
    observed: SummaryVector,
    metric: DistanceMetric,
    config: SmcConfig,
    stream: RandomStream,
    stop: Optional[StoppingRule] = None,
    match_indices: Optional[Sequence[int]] = None,
    match_name: str = "full",
) -> tuple[Population, SmcTrace]:
    """SMC-ABC targeting the indicator-kernel posterior for ``observed``.

    ``match_indices`` restricts the matching to a subset of the summary
    components (the full vector is still simulated and stored); the
    default matches all of them.  Returns the final population together
    with the per-iteration trace.
    """
    stop = stop or StoppingRule()
    stop_acc = stop.acc_rate if stop.acc_rate is not None else config.stop_acc_rate
    max_sims = (
        stop.max_simulations if stop.max_simulations is not None else config.max_simulations
    )
    d = observed.values.shape[0]
    if match_indices is None:
        match_indices = np.arange(d)
    match_indices = np.asarray(match_indices, dtype=np.intp)
    spec = MatchSpec(
        name=match_name,
        indices=match_indices,
        observed=observed.values[match_indices],
        metric=metric.restrict(match_indices),
        adaptive=True,
    )
    if max_sims < config.n_particles:
        raise ValueError(
            f"budget of {max_sims} simulations cannot initialize "
            f"{config.n_particles} particles"
        )
    thetas, summaries, rho, sims = initialize_from_prior(
        model, summary_fn, [spec], config.n_particles, stream
    )
    result = run_replenishment(
        model,
        summary_fn,
        [spec],
        thetas,
        summaries,
        rho,
        config,
        stop_acc,
        max_sims,
        stream,
        simulations_used=sims,
    )
    full_metric = metric
    is_subset = match_indices.shape[0] != d or np.any(match_indices != np.arange(d))
    if is_subset:
        # Matching ran on a subset: record its discrepancy/tolerance in the
        # marginal slot and keep the (unconstrained) full-summary rho too.
        rho_full = np.array(
            [full_metric.evaluate(s, observed.values) for s in result.summaries]
        )
        pop = Population(
            param_names=tuple(model.param_names),
            summary_names=observed.names,
            thetas=result.thetas,
            summaries=result.summaries,
            rho_full=rho_full,
            epsilon_full=math.inf,
            metric=full_metric,
            seed_lineage=stream,
            rho_marginal=result.rho[:, 0],
            epsilon_marginal=float(result.epsilons[0]),
            marginal_param=match_name,
        )
    else:
        pop = Population(
            param_names=tuple(model.param_names),
            summary_names=observed.names,
            thetas=result.thetas,
            summaries=result.summaries,
            rho_full=result.rho[:, 0],
            epsilon_full=float(result.epsilons[0]),
            metric=full_metric,
            seed_lineage=stream,
        )
    return pop, result.trace
