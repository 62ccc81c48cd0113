"""Assembly of downscaled temperature realizations from simulated residuals.

One shared residual simulation feeds three deterministic output layers: a
stationary realization anchored at the training-period mean, a variant with
the transferred model-simulated mean change, and a variant that additionally
rescales the standard deviation by the corrected coarse-scale change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Field, GridSpec, OverlapMap
from .moments import MomentCoefficients, predict, predict_mean
from .residual import ResidualModel
from .residual import simulate_residuals as _simulate_residuals

VARIANTS = ("xstar", "trend", "trendvar")
RATIO_BOUNDS = (0.5, 2.0)
VARIANCE_FLOOR = 1e-4


@dataclass(frozen=True)
class DownscaleBundle:
    """Everything needed to generate downscaled fields for one catchment."""

    fine_moments: MomentCoefficients      # fitted with trend on the fine grid
    residual: ResidualModel
    overlap: OverlapMap
    coarse_grid: GridSpec
    coarse_obs_train: MomentCoefficients
    coarse_rcm_train: MomentCoefficients
    coarse_rcm_test: MomentCoefficients
    train_dates: np.ndarray               # training-period date axis


def simulate_residuals(bundle: DownscaleBundle, grid: GridSpec, dates, seed) -> Field:
    """Shared standardized residual simulation for all variants."""
    return _simulate_residuals(bundle.residual, grid, dates, seed)


def stationary_mean(bundle: DownscaleBundle, grid: GridSpec, dates) -> np.ndarray:
    """Trend-free mean surface recentered on the training-period mean.

    Per cell, the time average over the output dates equals the training
    average of the full fitted mean (trend included).
    """
    base = predict_mean(bundle.fine_moments, grid, dates, with_trend=False)
    train_mu = predict_mean(bundle.fine_moments, grid, bundle.train_dates,
                            with_trend=True)
    offset = train_mu.mean(axis=1) - base.mean(axis=1)
    return base + offset[:, None]


def transferred_mean_change(bundle: DownscaleBundle, grid: GridSpec, dates) -> np.ndarray:
    """Model-simulated change in baseline and trend, mapped to fine cells.

    The change is the difference between the test- and training-fitted coarse
    mean models with seasonality excluded, carried over to each fine cell
    from the coarse cell with the largest intersection.
    """
    d_coarse = (predict_mean(bundle.coarse_rcm_test, bundle.coarse_grid, dates,
                             with_harmonics=False)
                - predict_mean(bundle.coarse_rcm_train, bundle.coarse_grid, dates,
                               with_harmonics=False))
    coarse_of_fine = bundle.overlap.largest_intersection(grid.cell_ids)
    return d_coarse[bundle.coarse_grid.index_of(coarse_of_fine), :]


def trend_mean(bundle: DownscaleBundle, grid: GridSpec, dates) -> np.ndarray:
    """Full fitted mean (trend extrapolated) plus the transferred change."""
    full = predict_mean(bundle.fine_moments, grid, dates,
                        with_trend=True, with_harmonics=True)
    return full + transferred_mean_change(bundle, grid, dates)


def variance_ratio(bundle: DownscaleBundle, grid: GridSpec, dates) -> np.ndarray:
    """Multiplicative sd change of the corrected coarse output, per fine cell.

    Ratio of the corrected test-period sd to the observed training-model sd
    at the coarse cell with the largest intersection, clamped to RATIO_BOUNDS.
    """
    obs = predict(bundle.coarse_obs_train, bundle.coarse_grid, dates)
    train = predict(bundle.coarse_rcm_train, bundle.coarse_grid, dates)
    test = predict(bundle.coarse_rcm_test, bundle.coarse_grid, dates)
    v_corr = np.maximum(obs.sigma ** 2 + test.sigma ** 2 - train.sigma ** 2,
                        VARIANCE_FLOOR)
    rho = np.sqrt(v_corr) / obs.sigma
    if not np.all(np.isfinite(rho)):
        raise ValueError("non-finite variance ratio from the coarse models")
    rho = np.clip(rho, *RATIO_BOUNDS)
    coarse_of_fine = bundle.overlap.largest_intersection(grid.cell_ids)
    return rho[bundle.coarse_grid.index_of(coarse_of_fine), :]


def assemble_xstar(bundle: DownscaleBundle, zstar: Field) -> Field:
    """Stationary realization at the training-period mean climate."""
    surf = predict(bundle.fine_moments, zstar.grid, zstar.dates)
    mu = stationary_mean(bundle, zstar.grid, zstar.dates)
    return zstar.with_values(zstar.values * surf.sigma + mu)


def assemble_xstar_trend(bundle: DownscaleBundle, zstar: Field) -> Field:
    """Realization with the transferred mean change added."""
    surf = predict(bundle.fine_moments, zstar.grid, zstar.dates)
    mu = trend_mean(bundle, zstar.grid, zstar.dates)
    return zstar.with_values(zstar.values * surf.sigma + mu)


def assemble_xstar_trend_var(bundle: DownscaleBundle, zstar: Field) -> Field:
    """Realization with both the mean change and the sd change applied."""
    surf = predict(bundle.fine_moments, zstar.grid, zstar.dates)
    mu = trend_mean(bundle, zstar.grid, zstar.dates)
    rho = variance_ratio(bundle, zstar.grid, zstar.dates)
    return zstar.with_values(zstar.values * surf.sigma * rho + mu)


_ASSEMBLERS = {"xstar": assemble_xstar, "trend": assemble_xstar_trend,
               "trendvar": assemble_xstar_trend_var}


def generate(bundle: DownscaleBundle, grid: GridSpec, dates, seed,
             variant: str = "trend") -> Field:
    """Simulate residuals and assemble the requested variant."""
    if variant not in _ASSEMBLERS:
        raise ValueError(f"unknown variant {variant!r}; pick one of {VARIANTS}")
    zstar = simulate_residuals(bundle, grid, dates, seed)
    return _ASSEMBLERS[variant](bundle, zstar)
