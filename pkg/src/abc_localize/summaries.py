"""Summary statistic functions and the parameter -> summary-subset map.

All operations are pure, so they can be evaluated concurrently across
particles.  The observed and simulated summaries of an analysis must use
the exact same rules (quantile interpolation, normal-score plotting
positions), which is why those rules are fixed here rather than exposed
as options.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from . import kernels
from .core import SummaryVector

# Octile probabilities; the quartiles are octiles 2, 4 and 6.
_OCTILE_PROBS = np.arange(1, 8) / 8.0


@dataclass(frozen=True)
class SummarySet:
    """Full summary name list plus the designated marginal subsets."""

    full: tuple[str, ...]
    marginal_map: dict[str, tuple[str, ...]]

    def __post_init__(self):
        object.__setattr__(self, "full", tuple(self.full))
        object.__setattr__(
            self, "marginal_map", {k: tuple(v) for k, v in self.marginal_map.items()}
        )
        if len(set(self.full)) != len(self.full):
            raise ValueError("summary names must be unique")
        for param, names in self.marginal_map.items():
            missing = [s for s in names if s not in self.full]
            if missing:
                raise ValueError(f"marginal summaries {missing} for {param!r} not in full set")

    def check_params(self, param_names) -> None:
        missing = [p for p in param_names if p not in self.marginal_map]
        if missing:
            raise ValueError(f"parameters {missing} have no marginal summary subset")

    def indices_for(self, param: str) -> list[int]:
        if param not in self.marginal_map:
            raise KeyError(f"unknown parameter {param!r}; have {sorted(self.marginal_map)}")
        return [self.full.index(s) for s in self.marginal_map[param]]


def extract_marginal(s: SummaryVector, summary_set: SummarySet, param: str) -> SummaryVector:
    """Sub-vector of ``s`` designated informative for ``param``."""
    if s.names != summary_set.full:
        raise ValueError(f"summary names {s.names} do not match the set {summary_set.full}")
    idx = summary_set.indices_for(param)
    return SummaryVector(s.values[idx], summary_set.marginal_map[param])


# ---------------------------------------------------------------------------
# time-series and sample summaries


def autocov_values(y: np.ndarray, maxlag: int = 2) -> np.ndarray:
    """Uncentered autocovariances eta_j = (1/T) sum_{t=1+j} y_t y_{t-j}."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape[0] <= maxlag:
        raise ValueError(f"series of length {y.shape[0]} too short for maxlag {maxlag}")
    return kernels.autocov(y, maxlag)


def autocovariances(y, maxlag: int = 2) -> SummaryVector:
    vals = autocov_values(np.asarray(y), maxlag)
    return SummaryVector(vals, tuple(f"acov{j}" for j in range(maxlag + 1)))


def octile_values(y: np.ndarray) -> np.ndarray:
    """Robust (location, scale, skewness, kurtosis) from the octiles.

    Quantiles use linear interpolation between order statistics at
    position p(n-1)+1.  Raises on samples shorter than 8 or with zero
    interquartile range.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] < 8:
        raise ValueError(f"need at least 8 observations, got {y.shape[0]}")
    e = np.quantile(y, _OCTILE_PROBS)
    l1, l2, l3 = e[1], e[3], e[5]
    s2 = l3 - l1
    if s2 <= 0:
        raise ValueError("degenerate sample: zero interquartile range")
    s3 = (l3 + l1 - 2.0 * l2) / s2
    s4 = (e[6] - e[4] + e[2] - e[0]) / s2
    return np.array([l2, s2, s3, s4])


def octile_summaries(y) -> SummaryVector:
    return SummaryVector(octile_values(np.asarray(y)), ("loc", "scale", "skew", "kurt"))


def normal_scores(x: np.ndarray) -> np.ndarray:
    """Normal scores of the ranks, plotting position i/(n+1), average ranks
    for ties.  Antisymmetrised so reversing the ranks negates the scores
    exactly."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    r = rankdata(x, method="average")
    p = r / (n + 1.0)
    return 0.5 * (ndtri(p) - ndtri(1.0 - p))


def gaussian_rank_correlation(x, y) -> float:
    """Pearson correlation of the normal scores of each margin's ranks.

    Exactly invariant under strictly increasing transforms of either
    margin (the ranks, hence the scores, are bitwise identical).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"need two equal-length samples, got {x.shape} and {y.shape}")
    if x.shape[0] < 3:
        raise ValueError(f"need at least 3 observations, got {x.shape[0]}")
    sx = normal_scores(x)
    sy = normal_scores(y)
    if np.all(sx == sx[0]) or np.all(sy == sy[0]):
        raise ValueError("constant margin: rank correlation undefined")
    # Identical / reversed rankings hit +-1 exactly.
    if np.array_equal(sx, sy):
        return 1.0
    if np.array_equal(sx, -sy):
        return -1.0
    ax = sx - sx.mean()
    ay = sy - sy.mean()
    r = float(np.dot(ax, ay) / math.sqrt(np.dot(ax, ax) * np.dot(ay, ay)))
    return min(1.0, max(-1.0, r))


# ---------------------------------------------------------------------------
# Huber's M-estimator for regression


class HuberConvergenceError(RuntimeError):
    """IRLS failed to converge; carries the last iterate."""

    def __init__(self, message, beta, sigma):
        super().__init__(message)
        self.beta = beta
        self.sigma = sigma


# Normal-consistency factor for the median absolute deviation.
_MAD_FACTOR = 1.4826


def huber_regression(
    x: np.ndarray,
    y: np.ndarray,
    k: float = 1.345,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> tuple[np.ndarray, float]:
    """Huber M-estimates (coefficients, scale) by IRLS.

    The scale is re-estimated each iteration as 1.4826 times the median
    absolute deviation of the residuals about their median; iteration
    stops when no parameter (coefficient or scale) moves by more than
    ``tol``.  Starts from ordinary least squares.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, q = x.shape
    if n <= q:
        raise ValueError(f"need more observations than coefficients, got {n} <= {q}")
    if np.linalg.matrix_rank(x) < q:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    xt = np.ascontiguousarray(x.T)
    beta = np.linalg.solve(xt @ x, xt @ y)
    sigma_prev = None
    for _ in range(max_iter):
        r = y - x @ beta
        sigma = _MAD_FACTOR * float(np.median(np.abs(r - np.median(r))))
        if sigma < 1e-12:
            # Residuals (nearly) degenerate: exact fit.
            return beta, sigma
        u = np.abs(r) / sigma
        w = np.where(u <= k, 1.0, k / np.maximum(u, 1e-300))
        xtw = xt * w
        beta_new = np.linalg.solve(xtw @ x, xtw @ y)
        delta = float(np.max(np.abs(beta_new - beta)))
        if sigma_prev is not None:
            delta = max(delta, abs(sigma - sigma_prev))
        beta, sigma_prev = beta_new, sigma
        if delta < tol:
            return beta, sigma
    raise HuberConvergenceError(
        f"IRLS did not converge in {max_iter} iterations", beta, sigma_prev
    )


def regression_summary_values(x: np.ndarray, y: np.ndarray, k: float = 1.345) -> np.ndarray:
    beta, sigma = huber_regression(x, y, k=k)
    if sigma <= 0:
        raise ValueError("degenerate fit: robust scale is zero, cannot log-transform")
    return np.append(beta, math.log(sigma))


def regression_summaries(x, y, k: float = 1.345) -> SummaryVector:
    """Huber coefficients plus log robust scale."""
    x = np.asarray(x, dtype=np.float64)
    vals = regression_summary_values(x, np.asarray(y, dtype=np.float64), k)
    names = tuple(f"beta{j + 1}" for j in range(x.shape[1])) + ("logscale",)
    return SummaryVector(vals, names)
