"""Space-time Gaussian moment model for daily mean temperature.

The mean of each cell/day is a spatial baseline (intercept + lat/lon/elevation)
plus two annual harmonics plus a linear trend in decades; the log standard
deviation uses the same structure without the trend. All 17 coefficients are
estimated jointly by maximum likelihood.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import FitError
from .grids import CalendarIndex, Field, GridSpec

# E[log|Z|] = log(sigma) - (euler_gamma + log 2)/2 for Z ~ N(0, sigma^2)
_HALF_NORMAL_LOG_OFFSET = 0.6351814227307392

MEAN_NAMES = ["alpha11", "alpha12", "alpha13", "alpha14",
              "alpha21", "alpha22", "alpha23", "alpha24", "alpha3"]
LOGSD_NAMES = ["beta11", "beta12", "beta13", "beta14",
               "beta21", "beta22", "beta23", "beta24"]


@dataclass(frozen=True)
class CovariateNormalizer:
    """Center/scale applied to (lat, lon, elev) before regression."""

    center: np.ndarray  # (3,)
    scale: np.ndarray   # (3,)

    def __post_init__(self):
        if np.any(self.scale <= 0):
            raise ValueError("normalizer scales must be positive")

    @staticmethod
    def from_grid(grid: GridSpec) -> "CovariateNormalizer":
        center = grid.covariates.mean(axis=0)
        scale = grid.covariates.std(axis=0)
        scale = np.where(scale < 1e-12, 1.0, scale)
        return CovariateNormalizer(center, scale)

    def apply(self, covariates) -> np.ndarray:
        return (np.asarray(covariates, dtype=float) - self.center) / self.scale

    def close_to(self, other: "CovariateNormalizer") -> bool:
        return (np.allclose(self.center, other.center)
                and np.allclose(self.scale, other.scale))


@dataclass(frozen=True)
class MomentCoefficients:
    """Fitted coefficients: 9 for the mean, 8 for the log standard deviation."""

    mean_spatial: np.ndarray    # (4,) intercept, lat, lon, elev
    mean_harmonic: np.ndarray   # (4,) cos, sin, cos2, sin2
    trend: float                # degC per decade
    logsd_spatial: np.ndarray   # (4,)
    logsd_harmonic: np.ndarray  # (4,)
    normalizer: CovariateNormalizer
    reference_year: int
    include_trend: bool = True

    def as_dict(self) -> dict:
        vals = dict(zip(MEAN_NAMES[:4], self.mean_spatial))
        vals.update(zip(MEAN_NAMES[4:8], self.mean_harmonic))
        vals["alpha3"] = float(self.trend)
        vals.update(zip(LOGSD_NAMES[:4], self.logsd_spatial))
        vals.update(zip(LOGSD_NAMES[4:8], self.logsd_harmonic))
        return {k: float(v) for k, v in vals.items()}

    def to_json(self, path=None) -> str:
        payload = {
            "coefficients": self.as_dict(),
            "normalizer": {"center": self.normalizer.center.tolist(),
                           "scale": self.normalizer.scale.tolist()},
            "reference_year": self.reference_year,
            "include_trend": self.include_trend,
        }
        text = json.dumps(payload, sort_keys=True, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @staticmethod
    def from_json(source) -> "MomentCoefficients":
        if isinstance(source, (str, Path)) and Path(str(source)).exists():
            payload = json.loads(Path(source).read_text())
        else:
            payload = json.loads(source)
        c = payload["coefficients"]
        return MomentCoefficients(
            mean_spatial=np.array([c[k] for k in MEAN_NAMES[:4]]),
            mean_harmonic=np.array([c[k] for k in MEAN_NAMES[4:8]]),
            trend=float(c["alpha3"]),
            logsd_spatial=np.array([c[k] for k in LOGSD_NAMES[:4]]),
            logsd_harmonic=np.array([c[k] for k in LOGSD_NAMES[4:8]]),
            normalizer=CovariateNormalizer(
                np.array(payload["normalizer"]["center"]),
                np.array(payload["normalizer"]["scale"])),
            reference_year=int(payload["reference_year"]),
            include_trend=bool(payload["include_trend"]),
        )


@dataclass(frozen=True)
class MomentSurface:
    """Pointwise mean and standard deviation, (cells x days)."""

    mu: np.ndarray
    sigma: np.ndarray


def harmonic_design(day_of_year) -> np.ndarray:
    """Annual harmonics [cos, sin, cos2, sin2] on a 365-day year."""
    ang = 2.0 * np.pi * np.asarray(day_of_year, dtype=float) / 365.0
    return np.column_stack([np.cos(ang), np.sin(ang), np.cos(2 * ang), np.sin(2 * ang)])


def spatial_design(grid: GridSpec, normalizer: CovariateNormalizer) -> np.ndarray:
    """[1, lat, lon, elev] rows with normalized covariates."""
    return np.column_stack([np.ones(grid.n_cells), normalizer.apply(grid.covariates)])


def design_row(norm_covariates, day_of_year, dec_year, include_trend=True):
    """Mean and log-sd design rows for one cell/day.

    norm_covariates must already be normalized. The mean row appends the
    decade term when include_trend is set; the log-sd row never carries it.
    """
    h = harmonic_design([day_of_year])[0]
    base = np.concatenate([[1.0], np.asarray(norm_covariates, dtype=float), h])
    mean_row = np.concatenate([base, [dec_year]]) if include_trend else base
    return mean_row, base


def _reduced_normal_eqs(S, Ht, x):
    """Least-squares solve for the separable (spatial + temporal) design."""
    n, T = x.shape
    a11 = T * (S.T @ S)
    a12 = np.outer(S.sum(axis=0), Ht.sum(axis=0))
    a22 = n * (Ht.T @ Ht)
    A = np.block([[a11, a12], [a12.T, a22]])
    b = np.concatenate([S.T @ x.sum(axis=1), Ht.T @ x.sum(axis=0)])
    return np.linalg.solve(A, b)


class _MomentObjective:
    """Mean negative log-likelihood and gradient over a (cells x days) field."""

    def __init__(self, x, S, H, y, include_trend):
        self.x = x
        self.S = S
        self.H = H
        self.y = y
        self.include_trend = include_trend
        self.n_mean = 4 + 4 + (1 if include_trend else 0)

    def split(self, theta):
        k = self.n_mean
        a_s, a_h = theta[0:4], theta[4:8]
        a3 = theta[8] if self.include_trend else 0.0
        b_s, b_h = theta[k:k + 4], theta[k + 4:k + 8]
        return a_s, a_h, a3, b_s, b_h

    def __call__(self, theta):
        a_s, a_h, a3, b_s, b_h = self.split(theta)
        n, T = self.x.shape
        N = n * T
        mu_t = self.H @ a_h + a3 * self.y
        lsig = np.add.outer(self.S @ b_s, self.H @ b_h)
        sig = np.exp(lsig)
        z = (self.x - np.add.outer(self.S @ a_s, mu_t)) / sig
        f = lsig.mean() + 0.5 * np.mean(z * z)
        w1 = z / sig                 # d(-ll)/d(mu) per entry, negated below
        w2 = 1.0 - z * z             # d(-ll)/d(log sigma) per entry
        g_mean_s = -(self.S.T @ w1.sum(axis=1)) / N
        w1_cols = w1.sum(axis=0)
        g_mean_h = -(self.H.T @ w1_cols) / N
        grad = [g_mean_s, g_mean_h]
        if self.include_trend:
            grad.append([-(self.y @ w1_cols) / N])
        grad.append((self.S.T @ w2.sum(axis=1)) / N)
        grad.append((self.H.T @ w2.sum(axis=0)) / N)
        return f, np.concatenate([np.atleast_1d(g) for g in grad])


def fit(field: Field, grid: GridSpec, include_trend: bool = True,
        reference_year: int | None = None,
        normalizer: CovariateNormalizer | None = None,
        max_iter: int = 500) -> MomentCoefficients:
    """Joint maximum-likelihood fit of all mean and log-sd coefficients.

    Starts from an OLS fit of the mean assuming constant variance, followed by
    an OLS fit of log absolute residuals (offset-corrected) for the log-sd
    part, then refines with L-BFGS using the analytic gradient.
    """
    if field.n_days < 730:
        raise ValueError("moment fit needs at least two years of daily data")
    if len(np.unique(grid.covariates, axis=0)) < 4:
        raise ValueError("moment fit needs at least four distinct covariate triples")
    if reference_year is None:
        reference_year = int(str(field.dates[0])[:4])
    cal = CalendarIndex.from_dates(field.dates, reference_year)
    if normalizer is None:
        normalizer = CovariateNormalizer.from_grid(grid)

    x = field.values
    S = spatial_design(grid, normalizer)
    H = harmonic_design(cal.day_of_year)
    y = cal.dec_year
    Ht = np.column_stack([H, y]) if include_trend else H

    # OLS initializer for the mean, constant variance
    mean0 = _reduced_normal_eqs(S, Ht, x)
    a_s0, rest = mean0[:4], mean0[4:]
    mu0 = np.add.outer(S @ a_s0, Ht @ rest)
    resid = x - mu0
    # log-sd initializer: OLS of log|resid| with the half-normal offset
    logabs = np.log(np.maximum(np.abs(resid), 1e-12)) + _HALF_NORMAL_LOG_OFFSET
    sd0 = _reduced_normal_eqs(S, H, logabs)

    const_sd = np.concatenate([[np.log(max(resid.std(), 1e-12))], np.zeros(7)])
    obj = _MomentObjective(x, S, H, y, include_trend)
    candidates = [np.concatenate([mean0, sd0]), np.concatenate([mean0, const_sd])]
    theta0 = min(candidates, key=lambda t: obj(t)[0])

    res = minimize(obj, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "ftol": 1e-10, "gtol": 1e-6})
    a_s, a_h, a3, b_s, b_h = obj.split(res.x)
    coeffs = MomentCoefficients(a_s, a_h, float(a3), b_s, b_h,
                                normalizer, reference_year, include_trend)
    if not res.success and np.max(np.abs(res.jac)) > 1e-4:
        raise FitError(f"moment fit did not converge: {res.message}",
                       best_params=coeffs,
                       diagnostics={"n_iter": res.nit, "grad_inf_norm":
                                    float(np.max(np.abs(res.jac))),
                                    "neg_loglik_per_obs": float(res.fun)})
    return coeffs


def log_likelihood(field: Field, grid: GridSpec, coeffs: MomentCoefficients) -> float:
    """Total Gaussian log-likelihood of a field under fitted coefficients."""
    surf = predict(coeffs, grid, field.dates)
    z = (field.values - surf.mu) / surf.sigma
    return float(-np.sum(np.log(surf.sigma)) - 0.5 * np.sum(z * z)
                 - 0.5 * field.values.size * np.log(2 * np.pi))


def predict(coeffs: MomentCoefficients, grid: GridSpec, dates) -> MomentSurface:
    """Evaluate the fitted mean and sd on a grid and date axis."""
    cal = CalendarIndex.from_dates(dates, coeffs.reference_year)
    S = spatial_design(grid, coeffs.normalizer)
    H = harmonic_design(cal.day_of_year)
    mu_t = H @ coeffs.mean_harmonic
    if coeffs.include_trend:
        mu_t = mu_t + coeffs.trend * cal.dec_year
    mu = np.add.outer(S @ coeffs.mean_spatial, mu_t)
    sigma = np.exp(np.add.outer(S @ coeffs.logsd_spatial, H @ coeffs.logsd_harmonic))
    return MomentSurface(mu, sigma)


def predict_mean(coeffs: MomentCoefficients, grid: GridSpec, dates,
                 with_trend: bool = True, with_harmonics: bool = True) -> np.ndarray:
    """Mean surface with optional trend/seasonality components."""
    cal = CalendarIndex.from_dates(dates, coeffs.reference_year)
    S = spatial_design(grid, coeffs.normalizer)
    mu_t = np.zeros(len(cal.dates))
    if with_harmonics:
        mu_t = mu_t + harmonic_design(cal.day_of_year) @ coeffs.mean_harmonic
    if with_trend and coeffs.include_trend:
        mu_t = mu_t + coeffs.trend * cal.dec_year
    return np.add.outer(S @ coeffs.mean_spatial, mu_t)


def standardize(field: Field, surface: MomentSurface) -> Field:
    """(x - mu) / sigma, elementwise."""
    if surface.mu.shape != field.values.shape:
        raise ValueError("surface does not match field dimensions")
    if np.any(surface.sigma <= 0):
        raise ValueError("surface sigma must be positive")
    return field.with_values((field.values - surface.mu) / surface.sigma)


def destandardize(resid: Field, surface: MomentSurface) -> Field:
    """Exact inverse of standardize."""
    if surface.mu.shape != resid.values.shape:
        raise ValueError("surface does not match field dimensions")
    if np.any(surface.sigma <= 0):
        raise ValueError("surface sigma must be positive")
    return resid.with_values(resid.values * surface.sigma + surface.mu)


def information_standard_errors(coeffs: MomentCoefficients, grid: GridSpec,
                                dates) -> dict:
    """Asymptotic standard errors from the expected information matrix.

    Valid when residuals are independent; with dependent residuals these
    understate the true sampling variability.
    """
    cal = CalendarIndex.from_dates(dates, coeffs.reference_year)
    S = spatial_design(grid, coeffs.normalizer)
    H = harmonic_design(cal.day_of_year)
    Ht = (np.column_stack([H, cal.dec_year])
          if coeffs.include_trend else H)
    n, T = grid.n_cells, len(cal.dates)

    # 1/sigma^2 factorizes into a spatial and a temporal part
    u = np.exp(-2.0 * (S @ coeffs.logsd_spatial))
    v = np.exp(-2.0 * (H @ coeffs.logsd_harmonic))
    i_ss = (S.T * u) @ S * v.sum()
    i_sh = np.outer(S.T @ u, Ht.T @ v)
    i_hh = u.sum() * (Ht.T * v) @ Ht
    info_mean = np.block([[i_ss, i_sh], [i_sh.T, i_hh]])

    j_ss = T * (S.T @ S)
    j_sh = np.outer(S.sum(axis=0), H.sum(axis=0))
    j_hh = n * (H.T @ H)
    info_logsd = 2.0 * np.block([[j_ss, j_sh], [j_sh.T, j_hh]])

    se_mean = np.sqrt(np.diag(np.linalg.inv(info_mean)))
    se_logsd = np.sqrt(np.diag(np.linalg.inv(info_logsd)))
    names = (MEAN_NAMES if coeffs.include_trend else MEAN_NAMES[:8]) + LOGSD_NAMES
    return dict(zip(names, np.concatenate([se_mean, se_logsd])))
