"""Priors, simulators and parameter-space constraints for the five
example models.

Each model exposes ``param_names``, ``prior_sample(gen)``,
``prior_logpdf(theta)`` and ``simulate(theta, gen)``; the free functions
below carry the underlying arithmetic and are what the tests exercise
directly.  All simulators are deterministic functions of (theta, n,
generator state), so particles can be simulated concurrently on distinct
streams.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import kernels
from .core import ParamVector

_LOG_2PI = math.log(2.0 * math.pi)


def _as_values(theta) -> np.ndarray:
    if isinstance(theta, ParamVector):
        return theta.values
    return np.asarray(theta, dtype=np.float64)


# ---------------------------------------------------------------------------
# normal location/scale model


@dataclass(frozen=True)
class NormalModel:
    """I.i.d. normal sample with unknown mean and variance.

    Priors: mu ~ N(mu0, phi0), phi ~ InvGamma(alpha, beta) with phi the
    variance (phi0 likewise).
    """

    n: int = 10
    mu0: float = 0.0
    phi0: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0

    param_names = ("mu", "phi")

    def __post_init__(self):
        if self.phi0 <= 0 or self.alpha <= 0 or self.beta <= 0:
            raise ValueError("NormalModel needs phi0, alpha, beta > 0")
        if self.n < 2:
            raise ValueError("NormalModel needs n >= 2")

    def prior_sample(self, gen: np.random.Generator) -> np.ndarray:
        mu = gen.normal(self.mu0, math.sqrt(self.phi0))
        phi = 1.0 / gen.gamma(self.alpha, 1.0 / self.beta)
        return np.array([mu, phi])

    def prior_logpdf(self, theta) -> float:
        mu, phi = _as_values(theta)
        if phi <= 0:
            return -math.inf
        lp = -0.5 * (_LOG_2PI + math.log(self.phi0)) - (mu - self.mu0) ** 2 / (2 * self.phi0)
        lp += (
            self.alpha * math.log(self.beta)
            - math.lgamma(self.alpha)
            - (self.alpha + 1) * math.log(phi)
            - self.beta / phi
        )
        return lp

    def simulate(self, theta, gen: np.random.Generator) -> np.ndarray:
        mu, phi = _as_values(theta)
        return mu + math.sqrt(phi) * gen.standard_normal(self.n)


# ---------------------------------------------------------------------------
# MA(2)


def ma2_invertible(theta) -> bool:
    """Invertibility constraints: -2 < t1 < 2, t1 + t2 > -1, t1 - t2 < 1."""
    t1, t2 = _as_values(theta)
    return (-2.0 < t1 < 2.0) and (t1 + t2 > -1.0) and (t1 - t2 < 1.0)


# The three inequalities alone leave t2 unbounded above; the uniform
# prior lives on their intersection with t2 < 1, the bounded triangle
# with vertices (-2, 1), (2, 1), (0, -1) and area 4.
_MA2_TRIANGLE_AREA = 4.0


def simulate_ma2(theta, n: int, gen: np.random.Generator) -> np.ndarray:
    """y_t = e_t + t1 e_{t-1} + t2 e_{t-2} with N(0,1) innovations.

    The two pre-sample innovations are drawn from the same N(0,1) law,
    so the series is stationary from t = 1.
    """
    if n < 1:
        raise ValueError(f"series length must be positive, got {n}")
    t1, t2 = _as_values(theta)
    e = gen.standard_normal(n + 2)
    return kernels.ma2_series(e, t1, t2)


@dataclass(frozen=True)
class MA2Model:
    n: int = 10000

    param_names = ("theta1", "theta2")

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("MA2Model needs n >= 3")

    def prior_sample(self, gen: np.random.Generator) -> np.ndarray:
        # Rejection from the bounding box of the invertibility triangle.
        while True:
            t1 = gen.uniform(-2.0, 2.0)
            t2 = gen.uniform(-1.0, 1.0)
            if ma2_invertible((t1, t2)):
                return np.array([t1, t2])

    def prior_logpdf(self, theta) -> float:
        t1, t2 = _as_values(theta)
        if ma2_invertible((t1, t2)) and t2 < 1.0:
            return -math.log(_MA2_TRIANGLE_AREA)
        return -math.inf

    def simulate(self, theta, gen: np.random.Generator) -> np.ndarray:
        return simulate_ma2(theta, self.n, gen)


# ---------------------------------------------------------------------------
# univariate and bivariate g-and-k


def gandk_quantile(z: float, a: float, b: float, g: float, k: float, c: float = 0.8) -> float:
    """Quantile function Q(z) = a + b(1 + c tanh(gz/2))(1+z^2)^k z."""
    return a + b * (1.0 + c * math.tanh(0.5 * g * z)) * (1.0 + z * z) ** k * z


def simulate_gandk(theta, n: int, gen: np.random.Generator, c: float = 0.8) -> np.ndarray:
    """n i.i.d. g-and-k draws via the quantile transform of N(0,1) z's."""
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    a, b, g, k = _as_values(theta)
    z = gen.standard_normal(n)
    return kernels.gandk_transform(z, a, b, g, k, c)


def simulate_bivgandk(theta, n: int, gen: np.random.Generator, c: float = 0.8) -> np.ndarray:
    """n rows from the bivariate g-and-k: correlated N(0,1) scores pushed
    through each margin's quantile function.

    theta = (a1,b1,g1,k1, a2,b2,g2,k2, r); the Gaussian scores use the
    Cholesky factor of the 2x2 correlation matrix.
    """
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    th = _as_values(theta)
    if th.shape[0] != 9:
        raise ValueError(f"bivariate g-and-k needs 9 parameters, got {th.shape[0]}")
    r = th[8]
    if abs(r) >= 1.0:
        raise ValueError(f"correlation must satisfy |r| < 1, got {r}")
    z = gen.standard_normal((n, 2))
    z1 = z[:, 0]
    z2 = r * z1 + math.sqrt(1.0 - r * r) * z[:, 1]
    x1 = kernels.gandk_transform(np.ascontiguousarray(z1), th[0], th[1], th[2], th[3], c)
    x2 = kernels.gandk_transform(np.ascontiguousarray(z2), th[4], th[5], th[6], th[7], c)
    return np.column_stack([x1, x2])


@dataclass(frozen=True)
class GandKModel:
    n: int = 10000
    c: float = 0.8

    param_names = ("a", "b", "g", "k")

    def prior_sample(self, gen: np.random.Generator) -> np.ndarray:
        return gen.uniform(0.0, 10.0, size=4)

    def prior_logpdf(self, theta) -> float:
        th = _as_values(theta)
        if np.all((th > 0.0) & (th < 10.0)):
            return 4.0 * math.log(0.1)
        return -math.inf

    def simulate(self, theta, gen: np.random.Generator) -> np.ndarray:
        return simulate_gandk(theta, self.n, gen, self.c)


@dataclass(frozen=True)
class BivGandKModel:
    n: int = 1000
    c: float = 0.8

    param_names = ("a1", "b1", "g1", "k1", "a2", "b2", "g2", "k2", "r")

    def prior_sample(self, gen: np.random.Generator) -> np.ndarray:
        gk = gen.uniform(0.0, 10.0, size=8)
        r = gen.uniform(-1.0, 1.0)
        return np.append(gk, r)

    def prior_logpdf(self, theta) -> float:
        th = _as_values(theta)
        if np.all((th[:8] > 0.0) & (th[:8] < 10.0)) and -1.0 < th[8] < 1.0:
            return 8.0 * math.log(0.1) + math.log(0.5)
        return -math.inf

    def simulate(self, theta, gen: np.random.Generator) -> np.ndarray:
        return simulate_bivgandk(theta, self.n, gen, self.c)


# ---------------------------------------------------------------------------
# linear regression with a fixed synthetic design

REGRESSION_DESIGN_SEED = 20250809
REGRESSION_N_ROWS = 117
REGRESSION_N_COLS = 3


def make_regression_design(seed: int = REGRESSION_DESIGN_SEED) -> np.ndarray:
    """Synthetic 117x3 fixed design standing in for the original agency data.

    Column 1 is the square root of a positive size variable (lognormal
    household counts); columns 2-3 are standardized size and experience
    proxies.  Regenerating with the default seed reproduces the shipped
    CSV byte for byte.
    """
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    households = gen.lognormal(mean=4.0, sigma=0.6, size=REGRESSION_N_ROWS)
    size_proxy = np.log(households) + gen.normal(0.0, 0.35, size=REGRESSION_N_ROWS)
    experience = 0.4 * np.log(households) + gen.normal(0.0, 1.0, size=REGRESSION_N_ROWS)

    def standardize(x):
        return (x - x.mean()) / x.std()

    x = np.column_stack([np.sqrt(households), standardize(size_proxy), standardize(experience)])
    if np.linalg.matrix_rank(x) != REGRESSION_N_COLS:
        raise RuntimeError("synthetic design lost full column rank")
    return x


def load_regression_design() -> np.ndarray:
    """Read the packaged design matrix CSV (header row + 117 data rows)."""
    path = resources.files("abc_localize").joinpath("data/regression_design.csv")
    with path.open("r", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
    if data.shape != (REGRESSION_N_ROWS, REGRESSION_N_COLS):
        raise ValueError(f"regression design has unexpected shape {data.shape}")
    return data


def simulate_regression(theta, model: "RegressionModel", gen: np.random.Generator) -> np.ndarray:
    """y = X beta + sigma * noise.

    The contaminated-gaussian kind multiplies a fixed fraction of the
    noise draws (positions chosen without replacement) by the scale
    multiplier, producing visible outliers.
    """
    th = _as_values(theta)
    x = model.design
    q = x.shape[1]
    if th.shape[0] != q + 1:
        raise ValueError(f"regression needs {q + 1} parameters, got {th.shape[0]}")
    beta, sigma = th[:q], th[q]
    if sigma <= 0:
        raise ValueError(f"scale must be positive, got {sigma}")
    n = x.shape[0]
    eps = gen.standard_normal(n)
    if model.noise_kind == "contaminated-gaussian":
        frac, mult = model.contamination
        n_out = int(round(frac * n))
        if n_out > 0:
            idx = gen.choice(n, size=n_out, replace=False)
            eps[idx] *= mult
    return x @ beta + sigma * eps


@dataclass(frozen=True)
class RegressionModel:
    """Fixed-design linear regression, theta = (beta1..betaq, sigma).

    Priors: beta_j ~ N(0, 10^2) iid, sigma ~ U(0, 10).
    """

    design: np.ndarray = field(default_factory=load_regression_design)
    noise_kind: str = "gaussian"
    contamination: tuple[float, float] = (0.1, 5.0)
    beta_prior_sd: float = 10.0
    sigma_prior_max: float = 10.0

    def __post_init__(self):
        x = np.asarray(self.design, dtype=np.float64)
        object.__setattr__(self, "design", x)
        if self.noise_kind not in ("gaussian", "contaminated-gaussian"):
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")
        if np.linalg.matrix_rank(x) != x.shape[1]:
            raise ValueError("design matrix must have full column rank")

    @property
    def param_names(self) -> tuple[str, ...]:
        q = self.design.shape[1]
        return tuple(f"beta{j + 1}" for j in range(q)) + ("sigma",)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    def prior_sample(self, gen: np.random.Generator) -> np.ndarray:
        q = self.design.shape[1]
        beta = gen.normal(0.0, self.beta_prior_sd, size=q)
        sigma = gen.uniform(0.0, self.sigma_prior_max)
        return np.append(beta, sigma)

    def prior_logpdf(self, theta) -> float:
        th = _as_values(theta)
        q = self.design.shape[1]
        beta, sigma = th[:q], th[q]
        if not (0.0 < sigma < self.sigma_prior_max):
            return -math.inf
        sd = self.beta_prior_sd
        lp = -0.5 * q * (_LOG_2PI + 2 * math.log(sd)) - float(np.dot(beta, beta)) / (2 * sd * sd)
        return lp - math.log(self.sigma_prior_max)

    def simulate(self, theta, gen: np.random.Generator) -> np.ndarray:
        return simulate_regression(theta, self, gen)
