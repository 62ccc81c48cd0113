"""Empirical quantile mapping between regridded model output and fine-scale data.

Per fine cell and calendar month, empirical quantiles of both training
samples are tabulated on a fixed probability grid and connected by a
shape-preserving monotone spline; outside the trained range the end segments
continue linearly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator

from .errors import IngestionError
from .grids import Field

_MAGIC = b"EQMTABLE"
DEFAULT_KNOT_STEP = 0.001


def _months_of(dates) -> np.ndarray:
    return pd.DatetimeIndex(np.asarray(dates, dtype="datetime64[D]")).month.to_numpy()


def knot_grid(step: float = DEFAULT_KNOT_STEP) -> np.ndarray:
    """Probability knots at the given step, clipped to [0.001, 0.999]."""
    if not 0 < step < 1:
        raise ValueError("knot step must be in (0, 1)")
    return np.unique(np.clip(np.arange(step, 1.0, step), 0.001, 0.999))


@dataclass(frozen=True)
class TransferTable:
    """Per cell/month quantile pairs on a shared probability grid."""

    cell_ids: np.ndarray    # (n,)
    prob_knots: np.ndarray  # (K,)
    source_q: np.ndarray    # (n, 12, K) regridded model quantiles, training
    target_q: np.ndarray    # (n, 12, K) fine-scale data quantiles, training
    grid_hash: str = ""

    def __post_init__(self):
        if np.any(np.diff(self.source_q, axis=2) < -1e-12):
            raise ValueError("source quantiles must be nondecreasing")
        if np.any(np.diff(self.target_q, axis=2) < -1e-12):
            raise ValueError("target quantiles must be nondecreasing")

    def save(self, path):
        header = json.dumps({
            "cell_ids": [int(i) for i in self.cell_ids],
            "prob_knots": self.prob_knots.tolist(),
            "grid_hash": self.grid_hash,
            "shape": list(self.source_q.shape),
        }, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(np.uint64(len(header)).tobytes())
            fh.write(header)
            fh.write(np.ascontiguousarray(self.source_q, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.target_q, dtype="<f8").tobytes())

    @staticmethod
    def load(path) -> "TransferTable":
        raw = Path(path).read_bytes()
        if raw[:len(_MAGIC)] != _MAGIC:
            raise IngestionError(f"{path} is not a transfer-table file")
        off = len(_MAGIC)
        hlen = int(np.frombuffer(raw[off:off + 8], dtype=np.uint64)[0])
        off += 8
        header = json.loads(raw[off:off + hlen].decode())
        off += hlen
        shape = tuple(header["shape"])
        count = int(np.prod(shape))
        source = np.frombuffer(raw[off:off + 8 * count], dtype="<f8").reshape(shape)
        off += 8 * count
        target = np.frombuffer(raw[off:off + 8 * count], dtype="<f8").reshape(shape)
        return TransferTable(np.array(header["cell_ids"], dtype=np.int64),
                             np.array(header["prob_knots"]),
                             source.copy(), target.copy(), header["grid_hash"])


def eqm_train(obs_fine: Field, rcm_regridded: Field,
              knot_step: float = DEFAULT_KNOT_STEP,
              min_days: int = 100, grid_hash: str = "") -> TransferTable:
    """Build monthly transfer tables from aligned training fields."""
    if not np.array_equal(obs_fine.grid.cell_ids, rcm_regridded.grid.cell_ids):
        raise ValueError("fields are not on the same grid")
    if not np.array_equal(obs_fine.dates, rcm_regridded.dates):
        raise ValueError("fields do not cover the same period")
    months = _months_of(obs_fine.dates)
    p = knot_grid(knot_step)
    n = obs_fine.grid.n_cells
    source_q = np.empty((n, 12, len(p)))
    target_q = np.empty((n, 12, len(p)))
    for m in range(1, 13):
        sel = months == m
        if sel.sum() < min_days:
            raise ValueError(f"month {m} has only {int(sel.sum())} training days "
                             f"(need >= {min_days})")
        source_q[:, m - 1, :] = np.quantile(rcm_regridded.values[:, sel], p, axis=1).T
        target_q[:, m - 1, :] = np.quantile(obs_fine.values[:, sel], p, axis=1).T
    return TransferTable(obs_fine.grid.cell_ids.copy(), p, source_q, target_q,
                         grid_hash)


def _dedup_knots(src, tgt):
    """Collapse tied source knots, averaging their targets."""
    s_u, inverse = np.unique(src, return_inverse=True)
    if len(s_u) == len(src):
        return src, tgt
    sums = np.bincount(inverse, weights=tgt)
    counts = np.bincount(inverse)
    return s_u, sums / counts


def _map_values(src, tgt, x):
    """Monotone spline through the knot pairs with linear end continuation."""
    s, t = _dedup_knots(np.asarray(src), np.asarray(tgt))
    if len(s) < 2:
        # constant source sample: fall back to a pure shift
        return x + (t.mean() - s.mean())
    spline = PchipInterpolator(s, t, extrapolate=False)
    y = np.empty_like(np.asarray(x, dtype=float))
    lo = x < s[0]
    hi = x > s[-1]
    mid = ~(lo | hi)
    y[mid] = spline(x[mid])
    slope_lo = (t[1] - t[0]) / (s[1] - s[0])
    slope_hi = (t[-1] - t[-2]) / (s[-1] - s[-2])
    y[lo] = t[0] + slope_lo * (x[lo] - s[0])
    y[hi] = t[-1] + slope_hi * (x[hi] - s[-1])
    return y


def eqm_apply(table: TransferTable, rcm_regridded: Field) -> Field:
    """Map a regridded field through its cell/month transfer functions."""
    if not np.array_equal(table.cell_ids, rcm_regridded.grid.cell_ids):
        raise ValueError("transfer table was trained on a different grid")
    months = _months_of(rcm_regridded.dates)
    out = np.empty_like(rcm_regridded.values)
    for m in np.unique(months):
        sel = months == m
        for i in range(rcm_regridded.grid.n_cells):
            out[i, sel] = _map_values(table.source_q[i, m - 1],
                                      table.target_q[i, m - 1],
                                      rcm_regridded.values[i, sel])
    return rcm_regridded.with_values(out)
