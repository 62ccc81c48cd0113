"""Split-normal (two-piece normal) distribution: density, CDF, quantiles, MLE.

The density is Gaussian with scale sigma1 left of the mode and sigma2 right of
it, continuous at the mode. Separate tail scales allow skewness while keeping
normal-like behavior.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr, ndtri

from .errors import FitError

_LOG_NORM_CONST = np.log(2.0) - 0.5 * np.log(2.0 * np.pi)


def _validate(sigma1, sigma2):
    if np.any(np.asarray(sigma1) <= 0) or np.any(np.asarray(sigma2) <= 0):
        raise ValueError("split-normal scales must be positive")


def sn_logpdf(x, mu, sigma1, sigma2):
    _validate(sigma1, sigma2)
    x, mu, sigma1, sigma2 = np.broadcast_arrays(x, mu, sigma1, sigma2)
    s = np.where(x <= mu, sigma1, sigma2)
    z = (np.asarray(x, dtype=float) - mu) / s
    return _LOG_NORM_CONST - np.log(sigma1 + sigma2) - 0.5 * z * z


def sn_pdf(x, mu, sigma1, sigma2):
    return np.exp(sn_logpdf(x, mu, sigma1, sigma2))


def sn_cdf(x, mu, sigma1, sigma2):
    """Piecewise-normal CDF; equals sigma1/(sigma1+sigma2) at the mode."""
    _validate(sigma1, sigma2)
    x, mu, sigma1, sigma2 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (x, mu, sigma1, sigma2)))
    total = sigma1 + sigma2
    lower = 2.0 * sigma1 / total * ndtr((x - mu) / sigma1)
    upper = (sigma1 - sigma2) / total + 2.0 * sigma2 / total * ndtr((x - mu) / sigma2)
    return np.where(x <= mu, lower, upper)


def sn_quantile(p, mu, sigma1, sigma2):
    """Exact inverse of sn_cdf for p in (0, 1)."""
    _validate(sigma1, sigma2)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("quantile probabilities must lie strictly in (0, 1)")
    p, mu, sigma1, sigma2 = np.broadcast_arrays(
        p, *(np.asarray(a, dtype=float) for a in (mu, sigma1, sigma2)))
    total = sigma1 + sigma2
    split = sigma1 / total
    with np.errstate(invalid="ignore"):
        lower = mu + sigma1 * ndtri(np.minimum(p * total / (2.0 * sigma1), 0.5))
        upper = mu + sigma2 * ndtri(
            np.maximum((p * total - sigma1 + sigma2) / (2.0 * sigma2), 0.5))
    return np.where(p <= split, lower, upper)


def sn_sample(n, mu, sigma1, sigma2, rng):
    """Inverse-CDF sampling."""
    u = rng.uniform(size=n)
    u = np.clip(u, 1e-15, 1 - 1e-15)
    return sn_quantile(u, mu, sigma1, sigma2)


def sn_mean(mu, sigma1, sigma2):
    return mu + np.sqrt(2.0 / np.pi) * (np.asarray(sigma2, dtype=float) - sigma1)


def sn_variance(mu, sigma1, sigma2):
    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    return (1.0 - 2.0 / np.pi) * (s2 - s1) ** 2 + s1 * s2


def _neg_loglik(theta, x, w):
    mu, s1, s2 = theta[0], np.exp(theta[1]), np.exp(theta[2])
    left = x <= mu
    s = np.where(left, s1, s2)
    z = (x - mu) / s
    nll = np.sum(w * (np.log(s1 + s2) + 0.5 * z * z))
    g_mu = -np.sum(w * z / s)
    wsum = np.sum(w)
    zl2 = np.sum(w[left] * z[left] ** 2)
    zr2 = np.sum(w[~left] * z[~left] ** 2)
    g_ls1 = wsum * s1 / (s1 + s2) - zl2
    g_ls2 = wsum * s2 / (s1 + s2) - zr2
    return nll, np.array([g_mu, g_ls1, g_ls2])


def sn_fit(samples, weights=None):
    """Maximum-likelihood estimate (mu, sigma1, sigma2).

    Optimizes over (mu, log sigma1, log sigma2) with the analytic gradient,
    starting from the weighted mean and one-sided RMS deviations.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 30:
        raise ValueError(f"split-normal fit needs >= 30 samples, got {x.size}")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != x.shape or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative and match the sample shape")

    mu0 = np.average(x, weights=w)
    dev = x - mu0
    var = np.average(dev ** 2, weights=w)
    if var < 1e-12:
        raise FitError("degenerate sample: zero variance")
    left = dev <= 0
    s1_0 = np.sqrt(max(np.average(dev ** 2, weights=w * left), 1e-6 * var))
    s2_0 = np.sqrt(max(np.average(dev ** 2, weights=w * ~left), 1e-6 * var))

    theta0 = np.array([mu0, np.log(s1_0), np.log(s2_0)])
    res = minimize(_neg_loglik, theta0, args=(x, w), jac=True,
                   method="L-BFGS-B", options={"maxiter": 200, "ftol": 1e-12})
    mu, s1, s2 = res.x[0], float(np.exp(res.x[1])), float(np.exp(res.x[2]))
    if not res.success and np.max(np.abs(res.jac)) > 1e-4 * w.sum():
        raise FitError(f"split-normal fit did not converge: {res.message}",
                       best_params=(mu, s1, s2))
    return float(mu), s1, s2
