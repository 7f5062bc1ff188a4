"""Shared domain types: named vectors, distance metrics, particles,
populations and the deterministic random-stream contract.

Everything here is an immutable value; metric evaluation is pure.  The
sampler and the experiment harness build on these types, so their
invariants (finite values, matching name orders, tolerance satisfaction)
are checked eagerly where cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

# Phase tags for deriving child random streams.  Streams with distinct
# (master_seed, key) pairs are statistically independent, so any fixed
# assignment works as long as it never collides across phases.
PHASE_DATA = 1
PHASE_MAD = 2
PHASE_INIT = 3
PHASE_RESAMPLE = 4
PHASE_MOVE = 5
PHASE_REFERENCE = 6
PHASE_RUN = 7


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random stream keyed by (master_seed, key path).

    Child derivation is O(1) and independent of the order in which
    children are created, so per-particle streams can be consumed
    concurrently while reproducing the sequential result exactly.
    """

    master_seed: int
    key: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RandomStream":
        for i in ids:
            if i < 0:
                raise ValueError("stream ids must be non-negative integers")
        return RandomStream(self.master_seed, self.key + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class ParamVector:
    """Ordered, named parameter values for one model."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))
        if vals.ndim != 1 or vals.shape[0] != len(self.names):
            raise ValueError(
                f"parameter vector has {vals.shape} values for {len(self.names)} names"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("parameter values must be finite")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


@dataclass(frozen=True)
class SummaryVector:
    """Ordered, named summary-statistic values."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))
        if vals.ndim != 1 or vals.shape[0] != len(self.names):
            raise ValueError(
                f"summary vector has {vals.shape} values for {len(self.names)} names"
            )
        if len(set(self.names)) != len(self.names):
            raise ValueError("summary names must be unique")
        if not np.all(np.isfinite(vals)):
            raise ValueError("summary values must be finite")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


@dataclass(frozen=True)
class DistanceMetric:
    """Euclidean or weighted-Euclidean metric on the summary space.

    The weighted form is sqrt(sum_i w_i (a_i - b_i)^2) with positive
    weights, which satisfies C*||a-b|| <= rho(a,b) for C = sqrt(min w).
    """

    kind: str = "euclidean"
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "weighted-euclidean"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "weighted-euclidean":
            w = np.asarray(self.weights, dtype=np.float64)
            if w.ndim != 1 or w.size == 0:
                raise ValueError("weighted metric needs a 1-d weight vector")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("metric weights must be finite and positive")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError("euclidean metric takes no weights")

    def evaluate(self, a: np.ndarray, b: np.ndarray) -> float:
        """Unchecked fast path used by the sampler's inner loop."""
        d = a - b
        if self.weights is None:
            return float(np.sqrt(np.dot(d, d)))
        return float(np.sqrt(np.dot(self.weights, d * d)))

    def restrict(self, indices: Sequence[int]) -> "DistanceMetric":
        """The same metric on a summary sub-space (weights sub-setted)."""
        if self.weights is None:
            return self
        return DistanceMetric("weighted-euclidean", self.weights[list(indices)])

    def lower_bound_constant(self) -> float:
        if self.weights is None:
            return 1.0
        return float(np.sqrt(self.weights.min()))


def distance(a: SummaryVector, b: SummaryVector, metric: DistanceMetric) -> float:
    """Distance between two summary vectors under ``metric``.

    Raises on any dimension mismatch (vector lengths, name order, or
    weight length).
    """
    if a.names != b.names:
        raise ValueError(
            f"summary vectors disagree: {len(a.names)} names {a.names} "
            f"vs {len(b.names)} names {b.names}"
        )
    if metric.weights is not None and metric.weights.shape[0] != a.values.shape[0]:
        raise ValueError(
            f"metric has {metric.weights.shape[0]} weights for "
            f"{a.values.shape[0]}-dimensional summaries"
        )
    return metric.evaluate(a.values, b.values)


def indicator_kernel(rho: float, eps: float) -> int:
    """1 if the discrepancy is within tolerance (inclusive), else 0."""
    if rho < 0 or eps < 0:
        raise ValueError(f"indicator_kernel needs non-negative inputs, got ({rho}, {eps})")
    return 1 if rho <= eps else 0


def weights_from_mads(samples: np.ndarray) -> np.ndarray:
    """Per-component weights 1/MAD^2 from rows of summary samples.

    Used to put heterogeneous summaries on comparable scales; computed
    once at experiment initialisation and frozen so the SMC target stays
    fixed across iterations.
    """
    samples = np.asarray(samples, dtype=np.float64)
    med = np.median(samples, axis=0)
    mad = np.median(np.abs(samples - med), axis=0)
    if np.any(mad <= 0):
        bad = [int(i) for i in np.nonzero(mad <= 0)[0]]
        raise ValueError(f"degenerate summary components (zero MAD) at indices {bad}")
    return 1.0 / mad**2


def metric_from_prior_predictive(
    draw_summaries: Callable[[np.random.Generator], np.ndarray],
    n_sims: int,
    stream: RandomStream,
) -> DistanceMetric:
    """Weighted-Euclidean metric with 1/MAD^2 weights estimated from
    ``n_sims`` prior-predictive summary draws."""
    rows = [draw_summaries(stream.child(PHASE_MAD, i).generator()) for i in range(n_sims)]
    return DistanceMetric("weighted-euclidean", weights_from_mads(np.asarray(rows)))


@dataclass(frozen=True)
class Particle:
    """One parameter draw with its simulated summaries and discrepancies."""

    theta: ParamVector
    summaries: SummaryVector
    rho_full: float
    rho_marginal: Optional[float] = None

    def __post_init__(self):
        if self.rho_full < 0:
            raise ValueError("rho_full must be non-negative")
        if self.rho_marginal is not None and self.rho_marginal < 0:
            raise ValueError("rho_marginal must be non-negative")


@dataclass
class Population:
    """Weighted-equal particle set with tolerance metadata.

    The array layout (one row per particle) is what the sampler operates
    on; ``particles`` materialises the per-particle view.
    """

    param_names: tuple[str, ...]
    summary_names: tuple[str, ...]
    thetas: np.ndarray
    summaries: np.ndarray
    rho_full: np.ndarray
    epsilon_full: float
    metric: DistanceMetric
    seed_lineage: RandomStream
    rho_marginal: Optional[np.ndarray] = None
    epsilon_marginal: Optional[float] = None
    marginal_param: Optional[str] = None

    def __post_init__(self):
        self.param_names = tuple(self.param_names)
        self.summary_names = tuple(self.summary_names)
        self.thetas = np.asarray(self.thetas, dtype=np.float64)
        self.summaries = np.asarray(self.summaries, dtype=np.float64)
        self.rho_full = np.asarray(self.rho_full, dtype=np.float64)
        if self.rho_marginal is not None:
            self.rho_marginal = np.asarray(self.rho_marginal, dtype=np.float64)
        self.check()

    @property
    def size(self) -> int:
        return self.thetas.shape[0]

    def check(self) -> None:
        """Assert the population invariants; raises AssertionError."""
        n = self.thetas.shape[0]
        assert n >= 2, "a population needs at least two particles"
        assert self.thetas.shape == (n, len(self.param_names))
        assert self.summaries.shape == (n, len(self.summary_names))
        assert self.rho_full.shape == (n,)
        assert np.all(self.rho_full <= self.epsilon_full), (
            "particles violate the full-summary tolerance"
        )
        if self.rho_marginal is not None:
            assert self.epsilon_marginal is not None
            assert self.rho_marginal.shape == (n,)
            assert np.all(self.rho_marginal <= self.epsilon_marginal), (
                "particles violate the marginal tolerance"
            )

    @property
    def particles(self) -> list[Particle]:
        out = []
        for i in range(self.size):
            out.append(
                Particle(
                    ParamVector(self.thetas[i].copy(), self.param_names),
                    SummaryVector(self.summaries[i].copy(), self.summary_names),
                    float(self.rho_full[i]),
                    None if self.rho_marginal is None else float(self.rho_marginal[i]),
                )
            )
        return out

    def __iter__(self) -> Iterator[Particle]:
        return iter(self.particles)

    def param_column(self, name: str) -> np.ndarray:
        return self.thetas[:, self.param_names.index(name)]

    def copy(self) -> "Population":
        return replace(
            self,
            thetas=self.thetas.copy(),
            summaries=self.summaries.copy(),
            rho_full=self.rho_full.copy(),
            rho_marginal=None if self.rho_marginal is None else self.rho_marginal.copy(),
        )
