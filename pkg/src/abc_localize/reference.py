"""Exact and numerically-exact reference results used as gold standards:
the normal example's marginal posteriors, Laplace-based idealized
summaries, MA(2) binding functions and the alternate binding root, and
the large-sample check for the lag-2 autocovariance statistic.

The normal posteriors are derived directly from the full-data
likelihood.  With SS = sum (y_i - ybar)^2:

    pi(mu | y)     propto N(mu; mu0, phi0) [beta + SS/2 + n(mu-ybar)^2/2]^-(alpha+n/2)
    pi(mu | ybar)  propto N(mu; mu0, phi0) [beta + n(mu-ybar)^2/2]^-(alpha+1/2)
    pi(phi | s^2)  =      InvGamma(alpha + (n-1)/2, beta + SS/2)
    pi(phi | y)    propto IG(phi; a, b) phi^-((n-1)/2) e^(-SS/2phi) N(ybar; mu0, phi0 + phi/n)

The last line uses the closed-form Gaussian integral over mu; a test
cross-checks it against direct quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import invgamma

from .core import ParamVector, RandomStream, SummaryVector
from .models import NormalModel, ma2_invertible, simulate_ma2
from .summaries import autocov_values

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DensityGrid:
    """1-d density tabulated on a strictly ascending grid."""

    points: np.ndarray
    density: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        den = np.asarray(self.density, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "density", den)
        if pts.ndim != 1 or pts.shape != den.shape:
            raise ValueError("grid points and densities must be 1-d and equal length")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly ascending")
        if np.any(den < 0):
            raise ValueError("densities must be non-negative")
        if self.normalized:
            total = np.trapezoid(den, pts)
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"normalized grid integrates to {total}, not 1")

    def normalize(self) -> "DensityGrid":
        total = np.trapezoid(self.density, self.points)
        if total <= 0:
            raise ValueError("cannot normalize a zero density")
        return DensityGrid(self.points, self.density / total, normalized=True)

    def mean(self) -> float:
        d = self.density if self.normalized else self.normalize().density
        return float(np.trapezoid(self.points * d, self.points))

    def variance(self) -> float:
        d = self.density if self.normalized else self.normalize().density
        m = float(np.trapezoid(self.points * d, self.points))
        return float(np.trapezoid((self.points - m) ** 2 * d, self.points))

    def sd(self) -> float:
        return math.sqrt(self.variance())

    def mode(self) -> float:
        """Continuous mode estimate: quadratic interpolation around the
        grid argmax (the grid spacing would otherwise quantise it)."""
        i = int(np.argmax(self.density))
        if i == 0 or i == self.points.shape[0] - 1:
            return float(self.points[i])
        x0, x1, x2 = self.points[i - 1 : i + 2]
        y0, y1, y2 = self.density[i - 1 : i + 2]
        denom = y0 - 2.0 * y1 + y2
        if denom >= 0:
            return float(x1)
        h = 0.5 * (x2 - x0)
        return float(x1 + 0.5 * (y0 - y2) / denom * h)


def _normalized_from_log(points: np.ndarray, logpdf: Callable[[np.ndarray], np.ndarray]) -> DensityGrid:
    logd = logpdf(points)
    d = np.exp(logd - logd.max())
    return DensityGrid(points, d).normalize()


@dataclass(frozen=True)
class NormalExactPosteriors:
    """The four marginal posteriors of the normal example, tabulated on
    default grids, plus their log-density callables for evaluation on
    arbitrary (e.g. KDE-shared) grids."""

    mu_full: DensityGrid
    mu_mean_only: DensityGrid
    phi_sd_only: DensityGrid
    phi_full: DensityGrid
    # closed form of pi(phi | s^2)
    phi_invgamma_shape: float
    phi_invgamma_scale: float
    log_mu_full: Callable[[np.ndarray], np.ndarray]
    log_mu_mean_only: Callable[[np.ndarray], np.ndarray]
    log_phi_sd_only: Callable[[np.ndarray], np.ndarray]
    log_phi_full: Callable[[np.ndarray], np.ndarray]

    def grid(self, name: str) -> DensityGrid:
        return getattr(self, name)

    def on_grid(self, name: str, points: np.ndarray) -> DensityGrid:
        return _normalized_from_log(np.asarray(points, dtype=np.float64),
                                    getattr(self, "log_" + name))


def laplace_idealized_summaries(y, model: NormalModel) -> SummaryVector:
    """Per-parameter (mode, variance) proxies for the posterior moments,
    from a Laplace fit of the joint posterior.

    The optimisation runs over (mu, log phi) by Newton iteration with the
    analytic gradient/Hessian of the reparametrised log posterior
    (Jacobian included); variances come from the inverse Hessian at the
    mode, the phi entry delta-mapped back to the phi scale.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    ybar = float(y.mean())
    ss = float(((y - ybar) ** 2).sum())
    if ss <= 0:
        raise ValueError("degenerate data: zero spread")
    mu0, phi0, alpha, beta = model.mu0, model.phi0, model.alpha, model.beta

    mu, ell = ybar, math.log(max(ss / n, 1e-12))
    h11 = h12 = h22 = 0.0
    for _ in range(100):
        iphi = math.exp(-ell)
        g1 = iphi * n * (ybar - mu) - (mu - mu0) / phi0
        g2 = -(n / 2.0) - alpha + iphi * ((ss + n * (ybar - mu) ** 2) / 2.0 + beta)
        h11 = -iphi * n - 1.0 / phi0
        h12 = -iphi * n * (ybar - mu)
        h22 = -iphi * ((ss + n * (ybar - mu) ** 2) / 2.0 + beta)
        det = h11 * h22 - h12 * h12
        # Newton step: solve H s = g
        s1 = (h22 * g1 - h12 * g2) / det
        s2 = (h11 * g2 - h12 * g1) / det
        mu -= s1
        ell -= s2
        if max(abs(s1), abs(s2)) < 1e-12:
            break
    else:
        raise RuntimeError("Laplace optimiser did not converge in 100 iterations")
    det = h11 * h22 - h12 * h12
    if not (h11 < 0 and det > 0):
        raise RuntimeError("Laplace Hessian is not negative definite at the mode")
    # inverse of -H
    var_mu = -h22 / det
    var_ell = -h11 / det
    phi_mode = math.exp(ell)
    var_phi = phi_mode**2 * var_ell
    return SummaryVector(
        np.array([mu, var_mu, phi_mode, var_phi]),
        ("mu_mode", "mu_var", "phi_mode", "phi_var"),
    )


def normal_exact_marginals(
    y,
    model: NormalModel,
    n_points: int = 4096,
) -> NormalExactPosteriors:
    """Numerically-exact marginal posterior grids for the normal example.

    Grids are normalised by the trapezoid rule.  The mu grid spans the
    Laplace mode +- 8 posterior SDs; the phi grid spans the 1e-6 .. 1-1e-6
    quantiles of the closed-form inverse-gamma pi(phi | s^2).
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    ybar = float(y.mean())
    ss = float(((y - ybar) ** 2).sum())
    mu0, phi0, alpha, beta = model.mu0, model.phi0, model.alpha, model.beta

    def log_prior_mu(mu):
        return -0.5 * (_LOG_2PI + math.log(phi0)) - (mu - mu0) ** 2 / (2.0 * phi0)

    def log_mu_full(mu):
        mu = np.asarray(mu, dtype=np.float64)
        return log_prior_mu(mu) - (alpha + n / 2.0) * np.log(
            beta + ss / 2.0 + n * (mu - ybar) ** 2 / 2.0
        )

    def log_mu_mean_only(mu):
        mu = np.asarray(mu, dtype=np.float64)
        return log_prior_mu(mu) - (alpha + 0.5) * np.log(beta + n * (mu - ybar) ** 2 / 2.0)

    shape_sd = alpha + (n - 1) / 2.0
    scale_sd = beta + ss / 2.0

    def log_phi_sd_only(phi):
        phi = np.asarray(phi, dtype=np.float64)
        out = np.full(phi.shape, -np.inf)
        ok = phi > 0
        out[ok] = -(shape_sd + 1.0) * np.log(phi[ok]) - scale_sd / phi[ok]
        return out

    def log_phi_full(phi):
        phi = np.asarray(phi, dtype=np.float64)
        out = np.full(phi.shape, -np.inf)
        ok = phi > 0
        p = phi[ok]
        marg_var = phi0 + p / n
        out[ok] = (
            -(alpha + 1.0 + (n - 1) / 2.0) * np.log(p)
            - (beta + ss / 2.0) / p
            - 0.5 * np.log(marg_var)
            - (ybar - mu0) ** 2 / (2.0 * marg_var)
        )
        return out

    lap = laplace_idealized_summaries(y, model)
    mu_c, mu_sd = lap["mu_mode"], math.sqrt(lap["mu_var"])
    mu_grid = np.linspace(mu_c - 8 * mu_sd, mu_c + 8 * mu_sd, n_points)
    phi_lo = float(invgamma.ppf(1e-6, shape_sd, scale=scale_sd))
    phi_hi = float(invgamma.ppf(1.0 - 1e-6, shape_sd, scale=scale_sd))
    phi_grid = np.linspace(phi_lo, phi_hi, n_points)

    return NormalExactPosteriors(
        mu_full=_normalized_from_log(mu_grid, log_mu_full),
        mu_mean_only=_normalized_from_log(mu_grid, log_mu_mean_only),
        phi_sd_only=_normalized_from_log(phi_grid, log_phi_sd_only),
        phi_full=_normalized_from_log(phi_grid, log_phi_full),
        phi_invgamma_shape=shape_sd,
        phi_invgamma_scale=scale_sd,
        log_mu_full=log_mu_full,
        log_mu_mean_only=log_mu_mean_only,
        log_phi_sd_only=log_phi_sd_only,
        log_phi_full=log_phi_full,
    )


# ---------------------------------------------------------------------------
# MA(2) reference quantities


def ma2_binding(theta) -> np.ndarray:
    """Expected autocovariances (b1, b2, b3) = (1+t1^2+t2^2, t1+t1 t2, t2)."""
    if isinstance(theta, ParamVector):
        theta = theta.values
    t1, t2 = np.asarray(theta, dtype=np.float64)
    return np.array([1.0 + t1 * t1 + t2 * t2, t1 + t1 * t2, t2])


def ma2_alternate_root(theta, tol: float = 1e-10) -> Optional[np.ndarray]:
    """The other parameter pair (if any) inside the invertibility triangle
    with the same first two binding-function values.

    Substitutes t1 = b2/(1+t2) into the b1 equation and scans the
    resulting function of t2 over (-1, 1) for sign changes, refining each
    by bisection.  Returns None when the input's root is the only one.
    """
    if isinstance(theta, ParamVector):
        theta = theta.values
    t1_in, t2_in = np.asarray(theta, dtype=np.float64)
    if not ma2_invertible((t1_in, t2_in)):
        raise ValueError(f"theta {(t1_in, t2_in)} is not invertible")
    b1, b2, _ = ma2_binding((t1_in, t2_in))

    def f(t2: float) -> float:
        t1 = b2 / (1.0 + t2)
        return 1.0 + t1 * t1 + t2 * t2 - b1

    lo, hi = -1.0 + 1e-9, 1.0 - 1e-9
    grid = np.linspace(lo, hi, 4001)
    vals = np.array([f(t) for t in grid])
    roots = []
    for i in range(grid.shape[0] - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0:
            while b - a > tol:
                m = 0.5 * (a + b)
                fm = f(m)
                if fm == 0.0:
                    a = b = m
                elif fa * fm < 0:
                    b, fb = m, fm
                else:
                    a, fa = m, fm
            roots.append(0.5 * (a + b))
    candidates = []
    for t2 in roots:
        t1 = b2 / (1.0 + t2)
        if abs(t2 - t2_in) < 1e-6 and abs(t1 - t1_in) < 1e-6:
            continue  # the input root itself
        if ma2_invertible((t1, t2)) and t2 < 1.0:
            candidates.append(np.array([t1, t2]))
    if not candidates:
        return None
    # Generically unique; if the scan found several, keep the one farthest
    # from the input in t2.
    return max(candidates, key=lambda r: abs(r[1] - t2_in))


@dataclass(frozen=True)
class S3AsymptoticReport:
    """Replication check of the claimed large-sample law for the lag-2
    autocovariance: mean theta2 and variance 2 theta2^2 / n."""

    n: int
    replications: int
    sample_mean: float
    sample_variance: float
    expected_mean: float
    expected_variance: float
    se_mean: float
    mean_ok: bool
    variance_ok: bool


def s3_asymptotic_check(
    theta,
    n: int,
    replications: int,
    stream: RandomStream,
    mean_se_factor: float = 4.0,
    variance_rtol: float = 0.2,
) -> S3AsymptoticReport:
    """Simulate the lag-2 autocovariance ``replications`` times at
    ``theta`` and compare with the claimed asymptotic moments."""
    if isinstance(theta, ParamVector):
        theta = theta.values
    t1, t2 = np.asarray(theta, dtype=np.float64)
    if t2 == 0:
        raise ValueError("theta2 must be non-zero for the asymptotic law")
    vals = np.empty(replications)
    for i in range(replications):
        y = simulate_ma2((t1, t2), n, stream.child(i).generator())
        vals[i] = autocov_values(y, 2)[2]
    sample_mean = float(vals.mean())
    sample_var = float(vals.var(ddof=1))
    expected_var = 2.0 * t2 * t2 / n
    se_mean = math.sqrt(sample_var / replications)
    return S3AsymptoticReport(
        n=n,
        replications=replications,
        sample_mean=sample_mean,
        sample_variance=sample_var,
        expected_mean=float(t2),
        expected_variance=expected_var,
        se_mean=se_mean,
        mean_ok=abs(sample_mean - t2) <= mean_se_factor * se_mean,
        variance_ok=abs(sample_var - expected_var) <= variance_rtol * expected_var,
    )
