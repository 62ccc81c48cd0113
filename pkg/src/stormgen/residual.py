"""Stationary space-time residual model of standardized temperature fields.

The field decomposes into a spatial-mean series (skewed marginals handled by
a split-normal/Gaussian copula with ARMA dependence) plus spatially
correlated, temporally independent deviations with a seasonally varying
exponential covariance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .arma import ArmaModel, arma_fit, arma_simulate
from .grids import CalendarIndex, Field, GridSpec
from .randomfield import cholesky_with_jitter
from .splitnormal import sn_cdf, sn_fit, sn_quantile
from .variogram import (VariogramParams, empirical_variogram,
                        exponential_covariance, fit_monthly,
                        smooth_variogram_params)

_P_CLIP = 1e-12


@dataclass(frozen=True)
class SplitNormalCurves:
    """Daily split-normal parameters (365-periodic)."""

    mu: np.ndarray      # (365,)
    sigma1: np.ndarray  # (365,)
    sigma2: np.ndarray  # (365,)

    def __post_init__(self):
        for name, arr in (("mu", self.mu), ("sigma1", self.sigma1),
                          ("sigma2", self.sigma2)):
            if arr.shape != (365,):
                raise ValueError(f"{name} must hold 365 daily values")
        if np.any(self.sigma1 <= 0) or np.any(self.sigma2 <= 0):
            raise ValueError("split-normal scales must be positive")

    def at_day(self, day_of_year):
        i = np.asarray(day_of_year) - 1
        return self.mu[i], self.sigma1[i], self.sigma2[i]


@dataclass(frozen=True)
class ResidualModel:
    """Fitted fine-scale residual model for one catchment."""

    sn: SplitNormalCurves
    arma: ArmaModel
    variogram: VariogramParams
    catchment_id: str = ""
    training_hash: str = ""

    def to_json(self, path=None) -> str:
        payload = {
            "catchment_id": self.catchment_id,
            "training_hash": self.training_hash,
            "split_normal": {"mu": self.sn.mu.tolist(),
                             "sigma1": self.sn.sigma1.tolist(),
                             "sigma2": self.sn.sigma2.tolist()},
            "arma": self.arma.as_dict(),
            "variogram": {"nugget": self.variogram.nugget.tolist(),
                          "psill": self.variogram.psill.tolist(),
                          "range_km": self.variogram.range_km.tolist()},
        }
        text = json.dumps(payload, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    @staticmethod
    def from_json(source) -> "ResidualModel":
        if isinstance(source, (str, Path)) and Path(str(source)).exists():
            payload = json.loads(Path(source).read_text())
        else:
            payload = json.loads(source)
        sn = payload["split_normal"]
        vg = payload["variogram"]
        return ResidualModel(
            sn=SplitNormalCurves(np.array(sn["mu"]), np.array(sn["sigma1"]),
                                 np.array(sn["sigma2"])),
            arma=ArmaModel.from_dict(payload["arma"]),
            variogram=VariogramParams(np.array(vg["nugget"]),
                                      np.array(vg["psill"]),
                                      np.array(vg["range_km"])),
            catchment_id=payload.get("catchment_id", ""),
            training_hash=payload.get("training_hash", ""),
        )


def pooled_day_window(day_of_year, window: int = 7):
    """Per calendar day, indices of observations within +-window days (circular)."""
    doy = np.asarray(day_of_year)
    out = []
    for d in range(1, 366):
        dist = np.abs(doy - d)
        dist = np.minimum(dist, 365 - dist)
        out.append(np.nonzero(dist <= window)[0])
    return out


def fit_split_normal_curves(series, day_of_year, window: int = 7,
                            gaussian: bool = False) -> SplitNormalCurves:
    """Daily marginal parameters from all same-season values across years.

    Values within +-window calendar days are pooled for each of the 365 fits.
    With gaussian=True both scales are tied to the plain standard deviation
    (the symmetric special case).
    """
    series = np.asarray(series, dtype=float)
    mu = np.empty(365)
    s1 = np.empty(365)
    s2 = np.empty(365)
    for d, idx in enumerate(pooled_day_window(day_of_year, window)):
        x = series[idx]
        if gaussian:
            mu[d], s1[d] = x.mean(), max(x.std(), 1e-9)
            s2[d] = s1[d]
        else:
            mu[d], s1[d], s2[d] = sn_fit(x)
    return SplitNormalCurves(mu, s1, s2)


def copula_transform(series, day_of_year, curves: SplitNormalCurves) -> np.ndarray:
    """Map a series to Gaussian scale through the daily marginal CDFs."""
    mu, s1, s2 = curves.at_day(day_of_year)
    p = np.clip(sn_cdf(series, mu, s1, s2), _P_CLIP, 1.0 - _P_CLIP)
    return ndtri(p)


def copula_inverse(u, day_of_year, curves: SplitNormalCurves) -> np.ndarray:
    """Map a Gaussian-scale series back through the daily marginal quantiles."""
    mu, s1, s2 = curves.at_day(day_of_year)
    p = np.clip(ndtr(u), _P_CLIP, 1.0 - _P_CLIP)
    return sn_quantile(p, mu, s1, s2)


def fit_residual_model(resid: Field, window: int = 7, n_bins: int = 15,
                       max_order: int = 3, gaussian_margins: bool = False,
                       catchment_id: str = "", training_hash: str = "") -> ResidualModel:
    """Fit the full residual model to a standardized residual field.

    The temporal series is the spatial mean of the field; what remains after
    removing it per day is treated as spatially correlated noise whose
    variogram is estimated per month and smoothed into daily curves.
    """
    cal = CalendarIndex.from_dates(resid.dates, int(str(resid.dates[0])[:4]))
    eta = resid.values.mean(axis=0)
    curves = fit_split_normal_curves(eta, cal.day_of_year, window, gaussian_margins)
    u = copula_transform(eta, cal.day_of_year, curves)
    arma = arma_fit(u, max_p=max_order, max_q=max_order)
    nu = resid.values - eta[None, :]
    emp = empirical_variogram(nu, cal.month, resid.grid.centers, n_bins=n_bins)
    params = smooth_variogram_params(fit_monthly(emp))
    return ResidualModel(curves, arma, params, catchment_id, training_hash)


def simulate_residuals(model: ResidualModel, grid: GridSpec, dates, seed) -> Field:
    """Simulate a standardized residual field over a date axis.

    Steps: draw the temporal Gaussian series from the ARMA model, map it
    through the copula to the skewed spatial-mean series, add per-day spatial
    fields drawn from the day's exponential covariance, sharing one Cholesky
    factor across days with the same calendar day. Substreams are derived
    from the seed per day, so results do not depend on evaluation order.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    cal = CalendarIndex.from_dates(dates, int(str(dates[0])[:4]))
    n_days = len(dates)
    ss = (seed if isinstance(seed, np.random.SeedSequence)
          else np.random.SeedSequence(seed))
    children = ss.spawn(n_days + 1)

    u_star = arma_simulate(model.arma, n_days, children[0])
    eta_star = copula_inverse(u_star, cal.day_of_year, model.sn)

    dist = grid.distance_matrix()
    values = np.empty((grid.n_cells, n_days))
    for doy in np.unique(cal.day_of_year):
        idx = np.nonzero(cal.day_of_year == doy)[0]
        nug, sill, rng_km = model.variogram.at_day(doy)
        L = cholesky_with_jitter(exponential_covariance(dist, nug, sill, rng_km))
        z = np.column_stack([np.random.default_rng(children[1 + t]).standard_normal(grid.n_cells)
                             for t in idx])
        values[:, idx] = L @ z
    values += eta_star[None, :]
    return Field(grid, dates, values)


def gaussian_margin_variant(model: ResidualModel) -> ResidualModel:
    """Collapse the marginal model to symmetric (Gaussian) tails."""
    pooled = np.sqrt(model.sn.sigma1 * model.sn.sigma2)
    return replace(model, sn=SplitNormalCurves(model.sn.mu, pooled, pooled))
