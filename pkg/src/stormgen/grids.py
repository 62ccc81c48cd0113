"""Grid geometry, daily temperature fields, calendar indexing, and regridding.

Grids are rectangular cells on a projected easting/northing plane (km).
Fields hold a (cells x days) matrix of daily mean temperature in degC.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse

from .errors import IngestionError

GRID_COLUMNS = ["cell_id", "easting_km", "northing_km", "width_km", "height_km",
                "lat", "lon", "elev_m"]


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid: cell ids, centers (km), cell sizes (km), covariates.

    covariates columns are latitude (deg), longitude (deg), elevation (m).
    """

    cell_ids: np.ndarray      # (n,) int
    centers: np.ndarray       # (n, 2) easting/northing km
    sizes: np.ndarray         # (n, 2) width/height km
    covariates: np.ndarray    # (n, 3) lat, lon, elev_m

    def __post_init__(self):
        ids = np.asarray(self.cell_ids)
        if len(np.unique(ids)) != len(ids):
            raise IngestionError("grid cell ids are not unique")
        if self.centers.shape != (len(ids), 2) or self.sizes.shape != (len(ids), 2):
            raise IngestionError("grid geometry arrays have inconsistent shapes")
        if self.covariates.shape != (len(ids), 3):
            raise IngestionError("grid must provide lat, lon and elevation per cell")
        if not np.all(np.isfinite(self.covariates)):
            raise IngestionError("grid covariates contain non-finite values")
        if np.any(self.sizes <= 0):
            bad = ids[np.any(self.sizes <= 0, axis=1)][0]
            raise IngestionError(f"cell {bad} has a degenerate polygon (non-positive size)")

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    def areas(self) -> np.ndarray:
        return self.sizes[:, 0] * self.sizes[:, 1]

    def bounds(self) -> np.ndarray:
        """Per cell axis-aligned rectangle (xmin, xmax, ymin, ymax), km."""
        half = self.sizes / 2.0
        return np.column_stack([
            self.centers[:, 0] - half[:, 0], self.centers[:, 0] + half[:, 0],
            self.centers[:, 1] - half[:, 1], self.centers[:, 1] + half[:, 1],
        ])

    def index_of(self, cell_ids) -> np.ndarray:
        """Positions of the given cell ids in this grid's ordering."""
        order = np.argsort(self.cell_ids)
        pos = np.searchsorted(self.cell_ids, cell_ids, sorter=order)
        idx = order[pos]
        if np.any(self.cell_ids[idx] != np.asarray(cell_ids)):
            missing = np.asarray(cell_ids)[self.cell_ids[idx] != np.asarray(cell_ids)][0]
            raise KeyError(f"cell id {missing} not in grid")
        return idx

    def subset(self, cell_ids) -> "GridSpec":
        idx = self.index_of(cell_ids)
        return GridSpec(self.cell_ids[idx], self.centers[idx],
                        self.sizes[idx], self.covariates[idx])

    def distance_matrix(self) -> np.ndarray:
        """Pairwise Euclidean center distances in km."""
        d = self.centers[:, None, :] - self.centers[None, :, :]
        return np.sqrt((d ** 2).sum(axis=2))

    def to_csv(self, path):
        df = pd.DataFrame({
            "cell_id": self.cell_ids,
            "easting_km": self.centers[:, 0], "northing_km": self.centers[:, 1],
            "width_km": self.sizes[:, 0], "height_km": self.sizes[:, 1],
            "lat": self.covariates[:, 0], "lon": self.covariates[:, 1],
            "elev_m": self.covariates[:, 2],
        })
        df.to_csv(path, index=False, float_format="%.17g")

    @staticmethod
    def from_csv(path) -> "GridSpec":
        df = pd.read_csv(path, float_precision="round_trip")
        missing = [c for c in GRID_COLUMNS if c not in df.columns]
        if missing:
            raise IngestionError(f"grid file {path} missing columns {missing}")
        return GridSpec(
            cell_ids=df["cell_id"].to_numpy(dtype=np.int64),
            centers=df[["easting_km", "northing_km"]].to_numpy(dtype=float),
            sizes=df[["width_km", "height_km"]].to_numpy(dtype=float),
            covariates=df[["lat", "lon", "elev_m"]].to_numpy(dtype=float),
        )


def daily_range(start, end) -> np.ndarray:
    """Inclusive daily date axis as datetime64[D]."""
    s = np.datetime64(start, "D")
    e = np.datetime64(end, "D")
    return np.arange(s, e + np.timedelta64(1, "D"))


@dataclass(frozen=True)
class CalendarIndex:
    """Per-date calendar positions used by the seasonal/trend designs.

    day_of_year is in 1..365 with Feb 29 sharing the value of Feb 28, so the
    365-day harmonics stay well defined. dec_year is (year - reference_year)/10.
    """

    dates: np.ndarray        # (T,) datetime64[D]
    day_of_year: np.ndarray  # (T,) int, 1..365
    dec_year: np.ndarray     # (T,) float, decades since reference year
    month: np.ndarray        # (T,) int, 1..12
    year: np.ndarray         # (T,) int
    reference_year: int

    @staticmethod
    def from_dates(dates, reference_year: int) -> "CalendarIndex":
        idx = pd.DatetimeIndex(np.asarray(dates, dtype="datetime64[D]"))
        doy = idx.dayofyear.to_numpy()
        # collapse leap days: Feb 29 and everything after it map one day back
        leap_shift = (idx.is_leap_year & (doy >= 60)).astype(int)
        doy = doy - leap_shift
        return CalendarIndex(
            dates=np.asarray(dates, dtype="datetime64[D]"),
            day_of_year=doy.astype(np.int64),
            dec_year=(idx.year.to_numpy() - reference_year) / 10.0,
            month=idx.month.to_numpy().astype(np.int64),
            year=idx.year.to_numpy().astype(np.int64),
            reference_year=int(reference_year),
        )


@dataclass(frozen=True)
class Field:
    """A (cells x days) matrix of daily values on a grid."""

    grid: GridSpec
    dates: np.ndarray    # (T,) datetime64[D]
    values: np.ndarray   # (n_cells, T) float64

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        if self.values.shape != (self.grid.n_cells, len(dates)):
            raise IngestionError(
                f"field shape {self.values.shape} does not match "
                f"{self.grid.n_cells} cells x {len(dates)} days")
        steps = np.diff(dates).astype("timedelta64[D]").astype(int)
        if np.any(steps <= 0):
            t = int(np.argmax(steps <= 0))
            raise IngestionError(f"non-monotone time axis at {dates[t + 1]}")
        if np.any(steps != 1):
            t = int(np.argmax(steps != 1))
            raise IngestionError(f"time axis not daily between {dates[t]} and {dates[t + 1]}")
        bad = ~np.isfinite(self.values)
        if bad.any():
            c, t = np.argwhere(bad)[0]
            raise IngestionError(
                f"non-finite value at cell {self.grid.cell_ids[c]}, date {dates[t]}")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def with_values(self, values) -> "Field":
        return Field(self.grid, self.dates, np.asarray(values, dtype=float))

    def subset_cells(self, cell_ids) -> "Field":
        idx = self.grid.index_of(cell_ids)
        return Field(self.grid.subset(cell_ids), self.dates, self.values[idx])

    def subset_dates(self, start, end) -> "Field":
        d = np.asarray(self.dates)
        mask = (d >= np.datetime64(start, "D")) & (d <= np.datetime64(end, "D"))
        return Field(self.grid, d[mask], self.values[:, mask])


def save_field(field: Field, path):
    """Write a field as CSV (.csv) or raw binary with a JSON sidecar (.bin)."""
    path = Path(path)
    if path.suffix == ".csv":
        df = pd.DataFrame(field.values.T, columns=[f"cell_{i}" for i in field.grid.cell_ids])
        df.insert(0, "date", pd.DatetimeIndex(field.dates).strftime("%Y-%m-%d"))
        df.to_csv(path, index=False, float_format="%.17g")
    elif path.suffix == ".bin":
        np.ascontiguousarray(field.values, dtype="<f8").tofile(path)
        sidecar = {
            "n_cells": int(field.grid.n_cells),
            "n_days": int(field.n_days),
            "start_date": str(field.dates[0]),
            "cell_ids": [int(i) for i in field.grid.cell_ids],
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True))
    else:
        raise ValueError(f"unsupported field format {path.suffix} (use .csv or .bin)")


def load_field(path, grid: GridSpec) -> Field:
    """Read a field written by save_field; both formats return identical values."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"field file {path} does not exist")
    if path.suffix == ".csv":
        df = pd.read_csv(path, float_precision="round_trip")
        if "date" not in df.columns:
            raise IngestionError(f"field file {path} has no date column")
        try:
            dates = np.array([np.datetime64(d, "D") for d in df["date"]])
        except ValueError as exc:
            raise IngestionError(f"unparseable date in {path}: {exc}") from None
        cols = [f"cell_{i}" for i in grid.cell_ids]
        missing = [c for c in cols if c not in df.columns]
        if missing:
            raise IngestionError(f"field file {path} missing columns {missing[:3]}")
        values = df[cols].to_numpy(dtype=float).T
    elif path.suffix == ".bin":
        sidecar = json.loads(path.with_suffix(".json").read_text())
        values = np.fromfile(path, dtype="<f8")
        n_cells, n_days = sidecar["n_cells"], sidecar["n_days"]
        if values.size != n_cells * n_days:
            raise IngestionError(f"binary field {path} has {values.size} values, "
                                 f"expected {n_cells * n_days}")
        values = values.reshape(n_cells, n_days)
        if list(sidecar["cell_ids"]) != [int(i) for i in grid.cell_ids]:
            raise IngestionError(f"binary field {path} cell ids do not match grid")
        dates = daily_range(sidecar["start_date"],
                            np.datetime64(sidecar["start_date"], "D")
                            + np.timedelta64(n_days - 1, "D"))
    else:
        raise IngestionError(f"unsupported field format {path.suffix}")
    return Field(grid, dates, values)


@dataclass(frozen=True)
class OverlapMap:
    """Pairwise overlap areas between a coarse and a fine grid.

    One row per (coarse, fine) pair with positive intersection area. Also
    resolves, per fine cell, the coarse cell with the largest intersection
    (ties broken by lowest coarse cell id).
    """

    coarse_ids: np.ndarray   # (k,) int
    fine_ids: np.ndarray     # (k,) int
    areas_km2: np.ndarray    # (k,) float

    def __post_init__(self):
        if np.any(self.areas_km2 < 0):
            raise IngestionError("overlap areas must be non-negative")

    def validate_against(self, coarse: GridSpec, fine: GridSpec):
        """Check total overlap per coarse cell does not exceed its area."""
        idx = coarse.index_of(self.coarse_ids)
        totals = np.zeros(coarse.n_cells)
        np.add.at(totals, idx, self.areas_km2)
        areas = coarse.areas()
        if np.any(totals > areas * (1 + 1e-9)):
            bad = coarse.cell_ids[totals > areas * (1 + 1e-9)][0]
            raise IngestionError(f"overlap areas exceed area of coarse cell {bad}")

    def weight_matrix(self, coarse: GridSpec, fine: GridSpec) -> sparse.csr_matrix:
        """(n_coarse x n_fine) row-normalized area weights."""
        rows = coarse.index_of(self.coarse_ids)
        cols = fine.index_of(self.fine_ids)
        w = sparse.csr_matrix((self.areas_km2, (rows, cols)),
                              shape=(coarse.n_cells, fine.n_cells))
        totals = np.asarray(w.sum(axis=1)).ravel()
        if np.any(totals <= 0):
            missing = coarse.cell_ids[totals <= 0]
            raise IngestionError(
                f"coarse cells with no fine overlap: {missing.tolist()[:10]}")
        inv = sparse.diags(1.0 / totals)
        return inv @ w

    def largest_intersection(self, fine_ids=None) -> np.ndarray:
        """Per fine cell, the coarse id with maximal overlap area."""
        if fine_ids is None:
            fine_ids = np.unique(self.fine_ids)
        # sort by (fine, -area, coarse) so the first row per fine cell wins ties
        order = np.lexsort((self.coarse_ids, -self.areas_km2, self.fine_ids))
        f_sorted = self.fine_ids[order]
        first = np.searchsorted(f_sorted, fine_ids, side="left")
        if np.any(first >= len(f_sorted)) or np.any(f_sorted[np.minimum(first, len(f_sorted) - 1)] != fine_ids):
            bad = np.asarray(fine_ids)[f_sorted[np.minimum(first, len(f_sorted) - 1)] != fine_ids][0]
            raise IngestionError(f"fine cell {bad} has no intersecting coarse cell")
        return self.coarse_ids[order][first]

    def to_csv(self, path):
        pd.DataFrame({"coarse_id": self.coarse_ids, "fine_id": self.fine_ids,
                      "area_km2": self.areas_km2}).to_csv(
            path, index=False, float_format="%.17g")

    @staticmethod
    def from_csv(path) -> "OverlapMap":
        df = pd.read_csv(path, float_precision="round_trip")
        return OverlapMap(df["coarse_id"].to_numpy(np.int64),
                          df["fine_id"].to_numpy(np.int64),
                          df["area_km2"].to_numpy(float))


def overlap_from_grids(coarse: GridSpec, fine: GridSpec) -> OverlapMap:
    """Axis-aligned rectangle intersection areas between two grids."""
    cb = coarse.bounds()
    fb = fine.bounds()
    ox = (np.minimum(cb[:, None, 1], fb[None, :, 1])
          - np.maximum(cb[:, None, 0], fb[None, :, 0]))
    oy = (np.minimum(cb[:, None, 3], fb[None, :, 3])
          - np.maximum(cb[:, None, 2], fb[None, :, 2]))
    area = np.clip(ox, 0, None) * np.clip(oy, 0, None)
    rows, cols = np.nonzero(area > 0)
    return OverlapMap(coarse.cell_ids[rows], fine.cell_ids[cols], area[rows, cols])


def upscale(fine: Field, coarse_grid: GridSpec, overlap: OverlapMap) -> Field:
    """Area-weighted average of fine cells within each coarse cell."""
    w = overlap.weight_matrix(coarse_grid, fine.grid)
    return Field(coarse_grid, fine.dates, np.asarray(w @ fine.values))


def nearest_neighbor_regrid(coarse: Field, fine_grid: GridSpec) -> Field:
    """Assign to each fine cell the series of the nearest coarse cell center.

    Distance is Euclidean in km; exact ties go to the lowest coarse cell id.
    """
    if coarse.grid.n_cells == 0:
        raise ValueError("cannot regrid from an empty coarse grid")
    order = np.argsort(coarse.grid.cell_ids)
    centers = coarse.grid.centers[order]
    d2 = ((fine_grid.centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    nearest = order[np.argmin(d2, axis=1)]   # argmin takes first = lowest id
    return Field(fine_grid, coarse.dates, coarse.values[nearest])


def read_catchments(path) -> dict:
    """Catchment file: CSV with columns catchment_id,fine_cell_id."""
    df = pd.read_csv(path)
    return {str(k): g["fine_cell_id"].to_numpy(np.int64)
            for k, g in df.groupby("catchment_id")}


def write_catchments(catchments: dict, path):
    rows = [(k, int(c)) for k, cells in catchments.items() for c in cells]
    pd.DataFrame(rows, columns=["catchment_id", "fine_cell_id"]).to_csv(path, index=False)
