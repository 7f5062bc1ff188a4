"""Numpy implementations of the simulation hot loops.

These are the fallback used when the compiled extension is unavailable
(or when ``ABC_LOCALIZE_KERNELS=py``).  The compiled versions in
``_speedups.pyx`` implement the same arithmetic; both backends must stay
interchangeable to ~1e-10 relative accuracy (exact equality is not
guaranteed because numpy's vectorised tanh/pow may differ from libm by
a few ulps).
"""

import numpy as np


def gandk_transform(z, a, b, g, k, c):
    """Map standard-normal draws through the g-and-k quantile function."""
    z = np.asarray(z, dtype=np.float64)
    return a + b * (1.0 + c * np.tanh(0.5 * g * z)) * np.power(1.0 + z * z, k) * z


def ma2_series(e, t1, t2):
    """Combine innovations e[-1..n] into a second-order moving average.

    ``e`` has length n+2; entries 0 and 1 are the burn-in innovations, so
    the output y[t] = e[t+2] + t1*e[t+1] + t2*e[t] has length n and is
    stationary from its first element.
    """
    e = np.asarray(e, dtype=np.float64)
    return e[2:] + t1 * e[1:-1] + t2 * e[:-2]


def autocov(y, maxlag):
    """Uncentered sample autocovariances (divisor T) up to ``maxlag``."""
    y = np.asarray(y, dtype=np.float64)
    t = y.shape[0]
    out = np.empty(maxlag + 1)
    for j in range(maxlag + 1):
        out[j] = np.dot(y[j:], y[: t - j]) / t
    return out
