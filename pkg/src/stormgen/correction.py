"""Coarse-scale bias correction of simulated temperature fields.

The moment-based method rescales standardized model anomalies with the
observed moments plus the model-simulated change between training and test
periods. Two mean-only benchmarks (domain-wide and per-cell shifts) are
included for comparison.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grids import Field
from .moments import MomentCoefficients, predict

VARIANCE_FLOOR = 1e-4  # degC^2


@dataclass(frozen=True)
class CorrectionContext:
    """The three fitted moment models used by the moment-based correction."""

    obs_train: MomentCoefficients
    rcm_train: MomentCoefficients
    rcm_test: MomentCoefficients
    variance_floor: float = VARIANCE_FLOOR

    def __post_init__(self):
        models = (self.obs_train, self.rcm_train, self.rcm_test)
        years = {m.reference_year for m in models}
        if len(years) != 1:
            raise ValueError(f"models disagree on reference year: {sorted(years)}")
        if not (self.obs_train.normalizer.close_to(self.rcm_train.normalizer)
                and self.obs_train.normalizer.close_to(self.rcm_test.normalizer)):
            raise ValueError("models must share the covariate normalizer")


def correct(raw_test: Field, ctx: CorrectionContext) -> Field:
    """Moment-based correction of a raw test-period field.

    Standardized anomalies of the raw field (relative to its own fitted test
    moments) are rescaled to the observed training moments shifted by the
    model-simulated change in mean and variance between the two periods.
    """
    grid, dates = raw_test.grid, raw_test.dates
    obs = predict(ctx.obs_train, grid, dates)
    train = predict(ctx.rcm_train, grid, dates)
    test = predict(ctx.rcm_test, grid, dates)

    mu_corr = obs.mu + (test.mu - train.mu)
    v_corr = obs.sigma ** 2 + (test.sigma ** 2 - train.sigma ** 2)
    floored = v_corr < ctx.variance_floor
    if floored.mean() > 0.01:
        warnings.warn(
            f"variance floor hit on {int(floored.sum())} of {floored.size} entries; "
            "the moment models may be incompatible", stacklevel=2)
    v_corr = np.maximum(v_corr, ctx.variance_floor)

    z = (raw_test.values - test.mu) / test.sigma
    return raw_test.with_values(mu_corr + np.sqrt(v_corr) * z)


def _check_aligned(a: Field, b: Field):
    if not np.array_equal(a.grid.cell_ids, b.grid.cell_ids):
        raise ValueError("fields are not on the same grid")
    if not np.array_equal(a.dates, b.dates):
        raise ValueError("fields do not cover the same period")


def simple_correct(raw_test: Field, obs_train: Field, rcm_train: Field) -> Field:
    """Add one domain-wide mean offset derived from the training period."""
    _check_aligned(obs_train, rcm_train)
    shift = obs_train.values.mean() - rcm_train.values.mean()
    return raw_test.with_values(raw_test.values + shift)


def local_simple_correct(raw_test: Field, obs_train: Field, rcm_train: Field) -> Field:
    """Add per-cell mean offsets derived from the training period."""
    _check_aligned(obs_train, rcm_train)
    if not np.array_equal(raw_test.grid.cell_ids, obs_train.grid.cell_ids):
        raise ValueError("test field is not on the training grid")
    shift = obs_train.values.mean(axis=1) - rcm_train.values.mean(axis=1)
    return raw_test.with_values(raw_test.values + shift[:, None])
