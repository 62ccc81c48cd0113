import numpy as np
import pytest

from stormgen.correction import (CorrectionContext, correct,
                                 local_simple_correct, simple_correct)
from stormgen.grids import Field, daily_range
from stormgen.moments import CovariateNormalizer, MomentCoefficients, predict

from conftest import make_grid


def _coeffs(grid, baseline=4.0, trend=0.1, logsd0=1.0, ref=1957, **kw):
    return MomentCoefficients(
        mean_spatial=np.array([baseline, -1.0, 0.4, -2.0]),
        mean_harmonic=np.array([-7.0, -2.0, 0.3, 0.1]),
        trend=trend,
        logsd_spatial=np.array([logsd0, 0.05, 0.0, 0.1]),
        logsd_harmonic=np.array([0.3, 0.1, 0.0, 0.0]),
        normalizer=CovariateNormalizer.from_grid(grid),
        reference_year=ref, **kw)


def _sim(grid, coeffs, dates, seed):
    surf = predict(coeffs, grid, dates)
    rng = np.random.default_rng(seed)
    return Field(grid, dates, surf.mu + surf.sigma * rng.standard_normal(surf.mu.shape))


def test_correct_is_identity_for_identical_models():
    grid = make_grid(8, seed=1)
    model = _coeffs(grid)
    ctx = CorrectionContext(model, model, model)
    raw = _sim(grid, model, daily_range("1987-01-01", "1991-12-31"), seed=2)
    out = correct(raw, ctx)
    assert np.max(np.abs(out.values - raw.values)) < 1e-9


def test_correct_pure_mean_shift():
    grid = make_grid(8, seed=2)
    obs = _coeffs(grid, baseline=4.0)
    rcm = _coeffs(grid, baseline=2.0)   # two degrees colder, same otherwise
    ctx = CorrectionContext(obs, rcm, rcm)
    raw = _sim(grid, rcm, daily_range("1987-01-01", "1990-12-31"), seed=3)
    out = correct(raw, ctx)
    np.testing.assert_allclose(out.values, raw.values + 2.0, atol=1e-9)


def test_correct_preserves_prescribed_change():
    # +0.9 degC modeled change between the periods carried into the output
    grid = make_grid(10, seed=3)
    dates_train = daily_range("1957-01-01", "1986-12-31")
    dates_test = daily_range("1987-01-01", "2005-12-31")
    obs = _coeffs(grid, baseline=4.0, trend=0.0)
    rcm_train = _coeffs(grid, baseline=2.0, trend=0.0)
    rcm_test = _coeffs(grid, baseline=2.9, trend=0.0)
    ctx = CorrectionContext(obs, rcm_train, rcm_test)
    raw = _sim(grid, rcm_test, dates_test, seed=4)
    out = correct(raw, ctx)
    obs_train_mean = predict(obs, grid, dates_train).mu.mean()
    assert out.values.mean() - obs_train_mean == pytest.approx(0.9, abs=0.05)


def test_correct_variance_rescaling():
    grid = make_grid(8, seed=5)
    obs = _coeffs(grid, logsd0=1.0)
    rcm_train = _coeffs(grid, logsd0=0.6)
    ctx = CorrectionContext(obs, rcm_train, rcm_train)
    dates = daily_range("1987-01-01", "1996-12-31")
    raw = _sim(grid, rcm_train, dates, seed=6)
    out = correct(raw, ctx)
    # anomalies rescaled by sigma_obs / sigma_rcm
    surf_obs = predict(obs, grid, dates)
    surf_rcm = predict(rcm_train, grid, dates)
    expected = surf_obs.mu + surf_obs.sigma * (raw.values - surf_rcm.mu) / surf_rcm.sigma
    np.testing.assert_allclose(out.values, expected, atol=1e-9)


def test_correct_warns_when_variance_floor_hit():
    grid = make_grid(8, seed=7)
    obs = _coeffs(grid, logsd0=-1.0)
    rcm_train = _coeffs(grid, logsd0=1.0)
    rcm_test = _coeffs(grid, logsd0=-1.0)   # big simulated variance decrease
    ctx = CorrectionContext(obs, rcm_train, rcm_test)
    raw = _sim(grid, rcm_test, daily_range("1987-01-01", "1989-12-31"), seed=8)
    with pytest.warns(UserWarning, match="variance floor"):
        out = correct(raw, ctx)
    assert np.all(np.isfinite(out.values))


def test_context_requires_shared_conventions():
    grid = make_grid(6)
    a = _coeffs(grid, ref=1957)
    b = _coeffs(grid, ref=1960)
    with pytest.raises(ValueError, match="reference year"):
        CorrectionContext(a, a, b)


def test_simple_correct_identity_and_shift():
    grid = make_grid(5, seed=8)
    dates = daily_range("1960-01-01", "1961-12-31")
    rng = np.random.default_rng(0)
    obs = Field(grid, dates, rng.normal(5, 2, (5, len(dates))))
    raw = Field(grid, dates, rng.normal(1, 2, (5, len(dates))))
    same = simple_correct(raw, obs, obs)
    np.testing.assert_array_equal(same.values, raw.values)
    shifted = simple_correct(raw, obs, obs.with_values(obs.values - 3.0))
    np.testing.assert_allclose(shifted.values, raw.values + 3.0, atol=1e-12)


def test_simple_correct_matches_two_pass_oracle():
    grid = make_grid(7, seed=9)
    dates = daily_range("1960-01-01", "1962-12-31")
    rng = np.random.default_rng(1)
    obs = Field(grid, dates, rng.normal(4, 3, (7, len(dates))))
    train = Field(grid, dates, rng.normal(2, 3, (7, len(dates))))
    raw = Field(grid, dates, rng.normal(2, 3, (7, len(dates))))
    out = simple_correct(raw, obs, train)
    shift = obs.values.mean() - train.values.mean()
    np.testing.assert_allclose(out.values, raw.values + shift, atol=1e-12)
    # anomaly preservation: output minus raw constant everywhere
    assert np.ptp(out.values - raw.values) < 1e-12


def test_local_simple_correct_per_cell_shifts():
    grid = make_grid(2, seed=10)
    dates = daily_range("1960-01-01", "1960-12-31")
    base = np.zeros((2, len(dates)))
    obs = Field(grid, dates, base + np.array([[1.0], [-1.0]]))
    train = Field(grid, dates, base)
    raw = Field(grid, dates, np.random.default_rng(2).normal(size=base.shape))
    out = local_simple_correct(raw, obs, train)
    np.testing.assert_allclose(out.values[0], raw.values[0] + 1.0, atol=1e-12)
    np.testing.assert_allclose(out.values[1], raw.values[1] - 1.0, atol=1e-12)


def test_local_simple_reduces_to_simple_for_constant_bias():
    grid = make_grid(6, seed=11)
    dates = daily_range("1960-01-01", "1961-12-31")
    rng = np.random.default_rng(3)
    obs = Field(grid, dates, rng.normal(size=(6, len(dates))))
    train = Field(grid, dates, obs.values - 2.5)
    raw = Field(grid, dates, rng.normal(size=(6, len(dates))))
    np.testing.assert_allclose(local_simple_correct(raw, obs, train).values,
                               simple_correct(raw, obs, train).values, atol=1e-12)


def test_local_simple_matches_loop_oracle():
    grid = make_grid(9, seed=12)
    dates = daily_range("1970-01-01", "1971-12-31")
    rng = np.random.default_rng(4)
    obs = Field(grid, dates, rng.normal(3, 2, (9, len(dates))))
    train = Field(grid, dates, rng.normal(1, 2, (9, len(dates))))
    raw = Field(grid, dates, rng.normal(1, 2, (9, len(dates))))
    out = local_simple_correct(raw, obs, train)
    for i in range(9):
        shift = obs.values[i].mean() - train.values[i].mean()
        np.testing.assert_allclose(out.values[i], raw.values[i] + shift, atol=1e-12)
