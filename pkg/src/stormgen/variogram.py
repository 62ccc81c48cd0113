"""Empirical semi-variograms, exponential-model fitting, seasonal smoothing.

Spatial dependence of residual fields is summarized per calendar month by a
binned empirical semi-variogram, fitted with a nugget + exponential model by
weighted least squares, then smoothed into daily parameter curves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError

log = logging.getLogger(__name__)

# cumulative first day-of-year per month (non-leap), 1-based
_MONTH_FIRST_DOY = np.array([1, 32, 60, 91, 121, 152, 182, 213, 244, 274, 305, 335])
_MONTH_LAST_DOY = np.array([31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334, 365])
MONTH_MID_DOY = (_MONTH_FIRST_DOY + _MONTH_LAST_DOY) / 2.0


@dataclass(frozen=True)
class MonthlyVariogram:
    """Binned empirical semi-variogram for one calendar month."""

    h: np.ndarray         # bin centers, km
    gamma: np.ndarray     # semi-variance estimates
    n_pairs: np.ndarray   # cell pairs per bin

    def __post_init__(self):
        if np.any(self.gamma < -1e-12):
            raise ValueError("semi-variogram values must be non-negative")
        if np.any(np.diff(self.h) <= 0):
            raise ValueError("bin centers must increase")


@dataclass(frozen=True)
class EmpiricalVariogram:
    """Monthly empirical semi-variograms keyed by month number (1..12)."""

    by_month: dict

    def months(self):
        return sorted(self.by_month)


def empirical_variogram(values, months, centers, n_bins: int = 15,
                        max_dist: float | None = None) -> EmpiricalVariogram:
    """Monthly binned semi-variogram of a (cells x days) residual matrix.

    gamma(h) averages squared differences over all cell pairs in the distance
    bin and all days of the month, divided by two. Bins default to 15 equal
    widths from 0 to half the largest pairwise distance; empty bins are
    dropped.
    """
    values = np.asarray(values, dtype=float)
    months = np.asarray(months)
    centers = np.asarray(centers, dtype=float)
    n = values.shape[0]
    if centers.shape[0] != n:
        raise ValueError("centers do not match the number of cells")

    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    iu, ju = np.triu_indices(n, k=1)
    pair_dist = dist[iu, ju]
    if max_dist is None:
        max_dist = pair_dist.max() / 2.0
    edges = np.linspace(0.0, max_dist, n_bins + 1)
    bin_idx = np.digitize(pair_dist, edges[1:-1])
    in_range = pair_dist <= max_dist
    counts = np.bincount(bin_idx[in_range], minlength=n_bins)
    keep = counts > 0
    # representative distance per bin: mean pair distance, not the midpoint
    h_sums = np.bincount(bin_idx[in_range], weights=pair_dist[in_range],
                         minlength=n_bins)
    h = h_sums[keep] / counts[keep]

    out = {}
    for m in np.unique(months):
        sel = months == m
        v = values[:, sel]
        sq = (v * v).sum(axis=1)
        # sum_t (v_s - v_s')^2 for every pair, via the Gram matrix
        cross = v @ v.T
        d2 = np.maximum(sq[iu] + sq[ju] - 2.0 * cross[iu, ju], 0.0)
        sums = np.bincount(bin_idx[in_range], weights=d2[in_range], minlength=n_bins)
        if not keep.all():
            log.info("month %d: dropping %d empty distance bins", m, (~keep).sum())
        gamma = sums[keep] / (2.0 * counts[keep] * sel.sum())
        out[int(m)] = MonthlyVariogram(h, gamma, counts[keep])
    return EmpiricalVariogram(out)


def exponential_semivariogram(h, nugget, psill, range_km):
    """nugget + psill * (1 - exp(-h / range)) for h > 0; zero at h = 0."""
    h = np.asarray(h, dtype=float)
    val = nugget + psill * (1.0 - np.exp(-h / range_km))
    return np.where(h > 0, val, 0.0)


def exponential_covariance(dist, nugget, psill, range_km):
    """Covariance matrix: psill * exp(-h / range) plus nugget where h = 0."""
    dist = np.asarray(dist, dtype=float)
    return psill * np.exp(-dist / range_km) + nugget * (dist == 0.0)


def fit_exponential(mv: MonthlyVariogram, n_starts: int = 5):
    """Weighted least-squares fit of (nugget, psill, range) to one variogram.

    Weights are n_pairs / h^2, downweighting distant bins. Runs a small
    multi-start and keeps the best objective; parameters are kept
    non-negative through bounds.
    """
    if len(mv.h) < 4:
        raise ValueError("variogram fit needs at least 4 usable bins")
    w = np.sqrt(mv.n_pairs / mv.h ** 2)
    gmax = max(mv.gamma.max(), 1e-12)
    hmax = mv.h.max()

    def resid(theta):
        return w * (mv.gamma - exponential_semivariogram(mv.h, *theta))

    starts = [
        (0.0, gmax, hmax / 3.0),
        (0.0, 0.7 * gmax, hmax),
        (0.1 * gmax, 0.9 * gmax, hmax / 10.0),
        (0.0, gmax, hmax / 20.0),
        (0.3 * gmax, 0.7 * gmax, hmax / 2.0),
    ][:n_starts]
    best = None
    for s in starts:
        try:
            res = least_squares(resid, s, bounds=([0.0, 1e-12, 1e-9], np.inf),
                                xtol=1e-14, ftol=1e-14, gtol=1e-14)
        except Exception:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise FitError("all variogram fit starts failed",
                       diagnostics={"h": mv.h.tolist(), "gamma": mv.gamma.tolist()})
    return tuple(float(v) for v in best.x)


def fit_monthly(emp: EmpiricalVariogram) -> dict:
    """Exponential parameters per month: {month: (nugget, psill, range)}."""
    return {m: fit_exponential(emp.by_month[m]) for m in emp.months()}


def smooth_seasonal(monthly_values, floor: float | None = None) -> np.ndarray:
    """Periodic daily curve through 12 monthly estimates.

    Harmonic regression (annual + semi-annual) on month midpoints, evaluated
    for days 1..365; optionally floored from below.
    """
    monthly_values = np.asarray(monthly_values, dtype=float)
    if monthly_values.shape != (12,):
        raise ValueError("expected 12 monthly values")

    def design(doy):
        ang = 2.0 * np.pi * np.asarray(doy, dtype=float) / 365.0
        return np.column_stack([np.ones(len(ang)), np.cos(ang), np.sin(ang),
                                np.cos(2 * ang), np.sin(2 * ang)])

    coef, *_ = np.linalg.lstsq(design(MONTH_MID_DOY), monthly_values, rcond=None)
    daily = design(np.arange(1, 366)) @ coef
    if floor is not None:
        daily = np.maximum(daily, floor)
    return daily


@dataclass(frozen=True)
class VariogramParams:
    """Daily exponential-covariance parameters (365-periodic curves)."""

    nugget: np.ndarray    # (365,) >= 0
    psill: np.ndarray     # (365,) > 0
    range_km: np.ndarray  # (365,) > 0

    def __post_init__(self):
        for name, arr, low in (("nugget", self.nugget, 0.0),
                               ("psill", self.psill, 0.0),
                               ("range_km", self.range_km, 0.0)):
            if arr.shape != (365,):
                raise ValueError(f"{name} must have 365 daily values")
            if np.any(arr < low) or (name != "nugget" and np.any(arr <= 0)):
                raise ValueError(f"{name} curve violates positivity")

    def at_day(self, day_of_year):
        i = np.asarray(day_of_year) - 1
        return self.nugget[i], self.psill[i], self.range_km[i]


def smooth_variogram_params(monthly: dict) -> VariogramParams:
    """Daily curves from monthly (nugget, psill, range) estimates.

    The nugget may reach zero; sill and range are floored at 10% of their
    smallest monthly estimate to stay positive.
    """
    months = sorted(monthly)
    if months != list(range(1, 13)):
        raise ValueError("need estimates for all 12 months")
    nug = np.array([monthly[m][0] for m in months])
    sill = np.array([monthly[m][1] for m in months])
    rng = np.array([monthly[m][2] for m in months])
    return VariogramParams(
        nugget=smooth_seasonal(nug, floor=0.0),
        psill=smooth_seasonal(sill, floor=0.1 * sill.min()),
        range_km=smooth_seasonal(rng, floor=0.1 * rng.min()),
    )
