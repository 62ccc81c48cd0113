import numpy as np
import pytest

from stormgen.grids import CalendarIndex, Field, daily_range
from stormgen.moments import (CovariateNormalizer, MomentCoefficients,
                              design_row, destandardize, fit,
                              information_standard_errors, log_likelihood,
                              predict, predict_mean, standardize)

from conftest import make_grid


def _truth(grid, trend=0.3, reference_year=1957):
    return MomentCoefficients(
        mean_spatial=np.array([4.0, -1.0, 0.4, -2.2]),
        mean_harmonic=np.array([-8.0, -2.0, 0.4, 0.2]),
        trend=trend,
        logsd_spatial=np.array([1.1, 0.05, 0.0, 0.15]),
        logsd_harmonic=np.array([0.35, 0.1, 0.0, 0.0]),
        normalizer=CovariateNormalizer.from_grid(grid),
        reference_year=reference_year)


def _simulate(grid, truth, dates, seed=0):
    surf = predict(truth, grid, dates)
    rng = np.random.default_rng(seed)
    return Field(grid, dates, surf.mu + surf.sigma * rng.standard_normal(surf.mu.shape))


# ---------------------------------------------------------------- design

def test_design_row_full_period_harmonics():
    mean_row, sd_row = design_row([0.1, 0.2, 0.3], day_of_year=365, dec_year=0.5)
    # cos/sin at full and double period for d=365: angles 2*pi and 4*pi
    np.testing.assert_allclose(mean_row[4:8],
                               [np.cos(2 * np.pi), np.sin(2 * np.pi),
                                np.cos(4 * np.pi), np.sin(4 * np.pi)], atol=1e-12)
    np.testing.assert_allclose(mean_row[4:8], [1, 0, 1, 0], atol=1e-10)
    assert mean_row[-1] == 0.5
    assert len(mean_row) == 9 and len(sd_row) == 8


def test_design_row_quarter_period():
    mean_row, _ = design_row([0, 0, 0], day_of_year=365 / 4, dec_year=0.0)
    assert mean_row[4] == pytest.approx(0.0, abs=1e-12)   # cos(pi/2)
    assert mean_row[6] == pytest.approx(-1.0, abs=1e-12)  # cos(pi)


def test_design_row_trend_flag():
    with_t, _ = design_row([0, 0, 0], 100, 1.0, include_trend=True)
    without_t, _ = design_row([0, 0, 0], 100, 1.0, include_trend=False)
    assert len(with_t) == 9 and len(without_t) == 8


def test_design_row_decade_normalization():
    cal = CalendarIndex.from_dates(daily_range("1967-03-01", "1967-03-01"), 1957)
    row, _ = design_row([0, 0, 0], cal.day_of_year[0], cal.dec_year[0])
    assert row[-1] == pytest.approx(1.0)


def test_harmonics_365_periodic():
    a, _ = design_row([0, 0, 0], 12, 0.0)
    b, _ = design_row([0, 0, 0], 12 + 365, 0.0)
    np.testing.assert_allclose(a, b, atol=1e-12)


# ---------------------------------------------------------------- predict

def test_predict_constant_when_only_intercept():
    grid = make_grid(5)
    coeffs = MomentCoefficients(np.array([5.0, 0, 0, 0]), np.zeros(4), 0.0,
                                np.zeros(4), np.zeros(4),
                                CovariateNormalizer.from_grid(grid), 2000)
    surf = predict(coeffs, grid, daily_range("2000-01-01", "2000-03-01"))
    np.testing.assert_allclose(surf.mu, 5.0, atol=1e-14)
    np.testing.assert_allclose(surf.sigma, 1.0, atol=1e-14)


def test_predict_trend_decade_difference():
    grid = make_grid(3)
    coeffs = MomentCoefficients(np.zeros(4), np.zeros(4), 0.3,
                                np.zeros(4), np.zeros(4),
                                CovariateNormalizer.from_grid(grid), 2000)
    a = predict(coeffs, grid, daily_range("2000-06-15", "2000-06-15"))
    b = predict(coeffs, grid, daily_range("2010-06-15", "2010-06-15"))
    np.testing.assert_allclose(b.mu - a.mu, 0.3, atol=1e-12)


def test_predict_mean_equivariant_in_intercept():
    grid = make_grid(4)
    dates = daily_range("2001-01-01", "2001-12-31")
    base = _truth(grid, reference_year=2001)
    shifted = MomentCoefficients(base.mean_spatial + np.array([2.5, 0, 0, 0]),
                                 base.mean_harmonic, base.trend,
                                 base.logsd_spatial, base.logsd_harmonic,
                                 base.normalizer, base.reference_year)
    np.testing.assert_allclose(predict(shifted, grid, dates).mu,
                               predict(base, grid, dates).mu + 2.5, atol=1e-12)


def test_predict_mean_components():
    grid = make_grid(4)
    dates = daily_range("2005-01-01", "2005-12-31")
    truth = _truth(grid, reference_year=1995)
    full = predict_mean(truth, grid, dates)
    no_trend = predict_mean(truth, grid, dates, with_trend=False)
    level = predict_mean(truth, grid, dates, with_trend=True, with_harmonics=False)
    np.testing.assert_allclose(full - no_trend, truth.trend * 1.0, atol=1e-12)
    assert np.allclose(level.std(axis=1), 0.0, atol=1e-12)  # constant per cell


# ---------------------------------------------------------------- fit

def test_fit_recovers_coefficients_within_three_se():
    grid = make_grid(20, seed=42)
    dates = daily_range("1957-01-01", "1986-12-31")
    truth = _truth(grid)
    f = _simulate(grid, truth, dates, seed=0)
    est = fit(f, grid, reference_year=1957)
    se = information_standard_errors(est, grid, dates)
    td, ed = truth.as_dict(), est.as_dict()
    for name in td:
        assert abs(ed[name] - td[name]) < 3 * se[name], name
    assert abs(est.trend - truth.trend) < 0.05


def test_fit_constant_variance_gives_small_sd_harmonics():
    grid = make_grid(12, seed=7)
    dates = daily_range("1960-01-01", "1979-12-31")
    truth = MomentCoefficients(np.array([2.0, -0.5, 0.2, -1.0]),
                               np.array([-6.0, -1.5, 0.3, 0.1]), 0.1,
                               np.array([0.8, 0.0, 0.0, 0.0]), np.zeros(4),
                               CovariateNormalizer.from_grid(grid), 1960)
    f = _simulate(grid, truth, dates, seed=3)
    est = fit(f, grid, reference_year=1960)
    np.testing.assert_allclose(est.logsd_harmonic, 0.0, atol=0.02)


def test_fit_loglik_beats_ols_initializer():
    grid = make_grid(8, seed=5)
    dates = daily_range("1970-01-01", "1975-12-31")
    truth = _truth(grid, reference_year=1970)
    f = _simulate(grid, truth, dates, seed=1)
    est = fit(f, grid, reference_year=1970)

    # OLS mean + constant variance reference point
    from stormgen.moments import _reduced_normal_eqs, harmonic_design, spatial_design
    cal = CalendarIndex.from_dates(dates, 1970)
    S = spatial_design(grid, est.normalizer)
    Ht = np.column_stack([harmonic_design(cal.day_of_year), cal.dec_year])
    mean0 = _reduced_normal_eqs(S, Ht, f.values)
    resid = f.values - np.add.outer(S @ mean0[:4], Ht @ mean0[4:])
    ols = MomentCoefficients(mean0[:4], mean0[4:8], mean0[8],
                             np.array([np.log(resid.std()), 0, 0, 0]), np.zeros(4),
                             est.normalizer, 1970)
    assert log_likelihood(f, grid, est) >= log_likelihood(f, grid, ols)


def test_fit_requires_two_years():
    grid = make_grid(5)
    f = _simulate(grid, _truth(grid, reference_year=2000),
                  daily_range("2000-01-01", "2000-12-31"), seed=0)
    with pytest.raises(ValueError, match="two years"):
        fit(f, grid)


def test_fit_requires_covariate_variety():
    grid = make_grid(5)
    uniform = type(grid)(grid.cell_ids, grid.centers, grid.sizes,
                         np.tile([63.0, 10.0, 500.0], (5, 1)))
    dates = daily_range("2000-01-01", "2002-12-31")
    f = Field(uniform, dates, np.random.default_rng(0).normal(size=(5, len(dates))))
    with pytest.raises(ValueError, match="covariate"):
        fit(f, uniform)


def test_fit_standardize_residual_moments():
    grid = make_grid(15, seed=11)
    dates = daily_range("1957-01-01", "1986-12-31")
    truth = _truth(grid)
    f = _simulate(grid, truth, dates, seed=4)
    est = fit(f, grid, reference_year=1957)
    z = standardize(f, predict(est, grid, dates))
    assert abs(z.values.mean()) < 0.01
    assert np.all(np.abs(z.values.std(axis=1) - 1.0) < 0.02)


# ------------------------------------------------------- (de)standardize

def test_standardize_roundtrip_exact():
    grid = make_grid(6)
    dates = daily_range("2000-01-01", "2001-12-31")
    truth = _truth(grid, reference_year=2000)
    f = _simulate(grid, truth, dates, seed=2)
    surf = predict(truth, grid, dates)
    z = standardize(f, surf)
    back = destandardize(z, surf)
    np.testing.assert_allclose(back.values, f.values, atol=1e-12)
    z2 = standardize(back, surf)
    np.testing.assert_allclose(z2.values, z.values, atol=1e-12)


def test_standardize_zero_and_two_sigma():
    grid = make_grid(3)
    dates = daily_range("2000-01-01", "2000-01-10")
    truth = _truth(grid, reference_year=2000)
    surf = predict(truth, grid, dates)
    z = standardize(Field(grid, dates, surf.mu.copy()), surf)
    np.testing.assert_allclose(z.values, 0.0, atol=1e-14)
    x = surf.mu.copy()
    x[1, 3] += 2 * surf.sigma[1, 3]
    z = standardize(Field(grid, dates, x), surf)
    assert z.values[1, 3] == pytest.approx(2.0, abs=1e-12)


# ---------------------------------------------------------------- JSON

def test_coefficients_json_roundtrip(tmp_path):
    grid = make_grid(5)
    truth = _truth(grid)
    path = tmp_path / "m.json"
    truth.to_json(path)
    back = MomentCoefficients.from_json(path)
    assert back.as_dict() == truth.as_dict()
    assert back.reference_year == truth.reference_year
    assert back.normalizer.close_to(truth.normalizer)


def test_fit_nonconvergence_carries_best_params():
    from stormgen.errors import FitError
    grid = make_grid(8, seed=13)
    dates = daily_range("2000-01-01", "2003-12-31")
    truth = _truth(grid, reference_year=2000)
    f = _simulate(grid, truth, dates, seed=5)
    with pytest.raises(FitError) as exc:
        fit(f, grid, reference_year=2000, max_iter=1)
    assert exc.value.best_params is not None
    assert "grad_inf_norm" in exc.value.diagnostics
