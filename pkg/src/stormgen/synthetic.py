"""Ground-truth world generator for verification.

Builds a small nested fine/coarse grid pair and simulates observed fine-scale
fields from a known moment model plus the full residual model, together with
coarse simulated fields from their own (biased) moment models with
autocorrelated, partially common noise. Every estimator in the package can be
checked against these known parameters.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .arma import ArmaModel, arma_acovf
from .grids import (CalendarIndex, Field, GridSpec, OverlapMap, daily_range,
                    overlap_from_grids, upscale)
from .moments import (CovariateNormalizer, MomentCoefficients, harmonic_design,
                      predict)
from .residual import ResidualModel, SplitNormalCurves, simulate_residuals
from .variogram import VariogramParams


@dataclass(frozen=True)
class WorldSpec:
    """True parameters and geometry of a synthetic verification world."""

    n_coarse_x: int = 6
    n_coarse_y: int = 6
    fine_per_coarse: int = 5
    fine_cell_km: float = 1.0
    train_start: str = "1957-01-01"
    train_end: str = "1986-12-31"
    test_start: str = "1987-01-01"
    test_end: str = "2005-12-31"

    # fine-scale truth (normalized covariate units): 4 spatial + 4 harmonic
    obs_mean: tuple = (4.0, -1.0, 0.4, -2.2, -8.0, -2.0, 0.4, 0.2)
    obs_trend: float = 0.12
    obs_logsd: tuple = (1.1, 0.05, 0.0, 0.15, 0.35, 0.1, 0.0, 0.0)

    # residual truth: seasonal split-normal scales, temporal model, variogram
    sn_scale_base: float = 0.55
    sn_scale_amp: float = 0.15
    sn_phase_doy: float = 15.0
    arma_ar: tuple = (0.85,)
    arma_ma: tuple = (-0.3,)
    vg_nugget_base: float = 0.02
    vg_nugget_amp: float = 0.02
    vg_psill_base: float = 0.62
    vg_psill_amp: float = 0.08
    vg_range_base: float = 6.0
    vg_range_amp: float = 2.0

    # coarse simulation truth and its prescribed test-vs-train change
    rcm_mean: tuple = (2.0, -1.0, 0.4, -2.2, -7.5, -1.8, 0.4, 0.2)
    rcm_trend: float = 0.12
    rcm_logsd: tuple = (0.588, 0.05, 0.0, 0.1, 0.3, 0.1, 0.0, 0.0)
    rcm_ar1: float = 0.875
    rcm_common_share: float = 0.08
    mean_change: float = 0.3
    trend_change: float = 0.02
    logsd_change: float = 0.0488

    noise_scale: float = 1.0
    seed: int = 7070707

    def to_json(self, path=None) -> str:
        text = json.dumps(dataclasses.asdict(self), sort_keys=True, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @staticmethod
    def from_json(source) -> "WorldSpec":
        if isinstance(source, (str, Path)) and Path(str(source)).exists():
            payload = json.loads(Path(source).read_text())
        else:
            payload = json.loads(source)
        for key in ("obs_mean", "obs_logsd", "rcm_mean", "rcm_logsd",
                    "arma_ar", "arma_ma"):
            if key in payload:
                payload[key] = tuple(payload[key])
        return WorldSpec(**payload)


@dataclass
class World:
    spec: WorldSpec
    fine_grid: GridSpec
    coarse_grid: GridSpec
    overlap: OverlapMap
    train_dates: np.ndarray
    test_dates: np.ndarray
    obs_fine_train: Field
    obs_fine_test: Field
    obs_coarse_train: Field
    obs_coarse_test: Field
    rcm_train: Field
    rcm_test: Field
    true_fine_moments: MomentCoefficients
    true_rcm_train: MomentCoefficients
    true_rcm_test: MomentCoefficients
    true_residual: ResidualModel


def build_grids(spec: WorldSpec):
    """Nested rectangular grids with smooth deterministic covariates."""
    nx = spec.n_coarse_x * spec.fine_per_coarse
    ny = spec.n_coarse_y * spec.fine_per_coarse
    dx = spec.fine_cell_km
    lx, ly = nx * dx, ny * dx

    fx, fy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    fe = (fx.ravel() + 0.5) * dx
    fn = (fy.ravel() + 0.5) * dx
    lat = 63.0 + fn / 111.0
    lon = 10.0 + fe / 50.0
    elev = (400.0 + 300.0 * np.sin(2 * np.pi * fe / lx) * np.cos(np.pi * fn / ly)
            + 4.0 * fn)
    fine = GridSpec(
        cell_ids=np.arange(1, nx * ny + 1, dtype=np.int64),
        centers=np.column_stack([fe, fn]),
        sizes=np.full((nx * ny, 2), dx),
        covariates=np.column_stack([lat, lon, elev]),
    )

    block = spec.fine_per_coarse * dx
    cx, cy = np.meshgrid(np.arange(spec.n_coarse_x), np.arange(spec.n_coarse_y),
                         indexing="ij")
    ce = (cx.ravel() + 0.5) * block
    cn = (cy.ravel() + 0.5) * block
    n_coarse = spec.n_coarse_x * spec.n_coarse_y
    coarse_geom = GridSpec(
        cell_ids=np.arange(1, n_coarse + 1, dtype=np.int64),
        centers=np.column_stack([ce, cn]),
        sizes=np.full((n_coarse, 2), block),
        covariates=np.zeros((n_coarse, 3)),
    )
    overlap = overlap_from_grids(coarse_geom, fine)
    # coarse covariates are area-weighted upscales of the fine ones
    w = overlap.weight_matrix(coarse_geom, fine)
    coarse = GridSpec(coarse_geom.cell_ids, coarse_geom.centers, coarse_geom.sizes,
                      np.asarray(w @ fine.covariates))
    return fine, coarse, overlap


def _moments_from_values(values, trend, logsd, grid, reference_year):
    return MomentCoefficients(
        mean_spatial=np.array(values[:4], dtype=float),
        mean_harmonic=np.array(values[4:], dtype=float),
        trend=float(trend),
        logsd_spatial=np.array(logsd[:4], dtype=float),
        logsd_harmonic=np.array(logsd[4:], dtype=float),
        normalizer=CovariateNormalizer.from_grid(grid),
        reference_year=reference_year,
        include_trend=True,
    )


def true_residual_model(spec: WorldSpec) -> ResidualModel:
    """Materialize the daily-curve residual model from the compact spec."""
    doy = np.arange(1, 366)
    c1 = np.cos(2 * np.pi * (doy - spec.sn_phase_doy) / 365.0)
    sigma1 = spec.sn_scale_base + spec.sn_scale_amp * c1
    sigma2 = spec.sn_scale_base - spec.sn_scale_amp * c1
    mu = -np.sqrt(2.0 / np.pi) * (sigma2 - sigma1)  # keeps the daily mean at zero
    curves = SplitNormalCurves(mu, sigma1, sigma2)

    unit = ArmaModel(np.array(spec.arma_ar), np.array(spec.arma_ma), 1.0)
    sigma2_arma = 1.0 / arma_acovf(unit, 0)[0]   # unit marginal variance
    arma = ArmaModel(np.array(spec.arma_ar), np.array(spec.arma_ma),
                     float(sigma2_arma))

    c2 = np.cos(4 * np.pi * (doy - 105.0) / 365.0)
    params = VariogramParams(
        nugget=np.maximum(spec.vg_nugget_base + spec.vg_nugget_amp * c2, 0.0),
        psill=spec.vg_psill_base + spec.vg_psill_amp * c1,
        range_km=spec.vg_range_base + spec.vg_range_amp * c1,
    )
    return ResidualModel(curves, arma, params, catchment_id="truth")


def true_rcm_models(spec: WorldSpec, coarse_grid: GridSpec,
                    train_dates, test_dates):
    """Training model plus a test model adjusted to hit the prescribed change.

    The baseline shift is solved so the modeled mean change from training to
    test period equals spec.mean_change exactly.
    """
    ref_year = int(spec.train_start[:4])
    train_model = _moments_from_values(spec.rcm_mean, spec.rcm_trend,
                                       spec.rcm_logsd, coarse_grid, ref_year)
    cal_tr = CalendarIndex.from_dates(train_dates, ref_year)
    cal_te = CalendarIndex.from_dates(test_dates, ref_year)
    a_h = np.array(spec.rcm_mean[4:])
    m_train = float(np.mean(harmonic_design(cal_tr.day_of_year) @ a_h
                            + spec.rcm_trend * cal_tr.dec_year))
    m_test = float(np.mean(harmonic_design(cal_te.day_of_year) @ a_h
                           + (spec.rcm_trend + spec.trend_change) * cal_te.dec_year))
    d_baseline = spec.mean_change - (m_test - m_train)

    mean_test = np.array(spec.rcm_mean, dtype=float)
    mean_test[0] += d_baseline
    logsd_test = np.array(spec.rcm_logsd, dtype=float)
    logsd_test[0] += spec.logsd_change
    test_model = _moments_from_values(mean_test, spec.rcm_trend + spec.trend_change,
                                      logsd_test, coarse_grid, ref_year)
    return train_model, test_model


def _ar1_matrix(n_series, n_days, phi, rng) -> np.ndarray:
    """Stationary AR(1) rows with unit marginal variance."""
    burn = max(50, int(10.0 / max(1e-6, 1.0 - phi)))
    eps = rng.normal(scale=np.sqrt(1.0 - phi ** 2), size=(n_series, n_days + burn))
    return lfilter([1.0], [1.0, -phi], eps, axis=1)[:, burn:]


def generate_rcm_fields(spec: WorldSpec, coarse_grid: GridSpec,
                        train_dates, test_dates, seed) -> tuple:
    """Coarse simulated fields: own moment models plus AR(1) noise.

    The noise mixes one common factor across all coarse cells with
    independent per-cell factors, both AR(1) with the same persistence, so
    fields are temporally smoother than the fine-scale world and spatially
    blocky after regridding.
    """
    train_model, test_model = true_rcm_models(spec, coarse_grid,
                                              train_dates, test_dates)
    all_dates = np.concatenate([train_dates, test_dates])
    rng = np.random.default_rng(seed)
    n = coarse_grid.n_cells
    common = _ar1_matrix(1, len(all_dates), spec.rcm_ar1, rng)
    own = _ar1_matrix(n, len(all_dates), spec.rcm_ar1, rng)
    w = spec.rcm_common_share
    e = np.sqrt(w) * common + np.sqrt(1.0 - w) * own

    n_train = len(train_dates)
    surf_tr = predict(train_model, coarse_grid, train_dates)
    surf_te = predict(test_model, coarse_grid, test_dates)
    train = Field(coarse_grid, train_dates,
                  surf_tr.mu + spec.noise_scale * surf_tr.sigma * e[:, :n_train])
    test = Field(coarse_grid, test_dates,
                 surf_te.mu + spec.noise_scale * surf_te.sigma * e[:, n_train:])
    return train, test, train_model, test_model


def generate_world(spec: WorldSpec) -> World:
    """Simulate the full world: fine observations plus coarse simulations."""
    fine, coarse, overlap = build_grids(spec)
    train_dates = daily_range(spec.train_start, spec.train_end)
    test_dates = daily_range(spec.test_start, spec.test_end)
    gap = (np.datetime64(spec.test_start, "D")
           - np.datetime64(spec.train_end, "D")).astype(int)
    if gap != 1:
        raise ValueError("test period must start the day after training ends")
    all_dates = np.concatenate([train_dates, test_dates])
    ref_year = int(spec.train_start[:4])

    ss = np.random.SeedSequence(spec.seed)
    kids = ss.spawn(2)

    fine_moments = _moments_from_values(spec.obs_mean, spec.obs_trend,
                                        spec.obs_logsd, fine, ref_year)
    residual = true_residual_model(spec)
    surf = predict(fine_moments, fine, all_dates)
    if spec.noise_scale == 0.0:
        z = np.zeros_like(surf.mu)
    else:
        z = spec.noise_scale * simulate_residuals(residual, fine, all_dates,
                                                  kids[0]).values
    obs_fine = Field(fine, all_dates, surf.mu + surf.sigma * z)
    n_train = len(train_dates)
    obs_fine_train = Field(fine, train_dates, obs_fine.values[:, :n_train])
    obs_fine_test = Field(fine, test_dates, obs_fine.values[:, n_train:])

    rcm_train, rcm_test, rcm_train_model, rcm_test_model = generate_rcm_fields(
        spec, coarse, train_dates, test_dates, kids[1])

    return World(
        spec=spec, fine_grid=fine, coarse_grid=coarse, overlap=overlap,
        train_dates=train_dates, test_dates=test_dates,
        obs_fine_train=obs_fine_train, obs_fine_test=obs_fine_test,
        obs_coarse_train=upscale(obs_fine_train, coarse, overlap),
        obs_coarse_test=upscale(obs_fine_test, coarse, overlap),
        rcm_train=rcm_train, rcm_test=rcm_test,
        true_fine_moments=fine_moments,
        true_rcm_train=rcm_train_model, true_rcm_test=rcm_test_model,
        true_residual=residual,
    )
