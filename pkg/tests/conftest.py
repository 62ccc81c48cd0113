import numpy as np
import pytest

from stormgen.grids import Field, GridSpec, daily_range


def make_grid(n_cells, seed=0, span_km=50.0):
    """Random scattered grid with distinct covariates."""
    rng = np.random.default_rng(seed)
    return GridSpec(
        cell_ids=np.arange(1, n_cells + 1, dtype=np.int64),
        centers=np.column_stack([rng.uniform(0, span_km, n_cells),
                                 rng.uniform(0, span_km, n_cells)]),
        sizes=np.full((n_cells, 2), 1.0),
        covariates=np.column_stack([63.0 + rng.uniform(0, 1, n_cells),
                                    10.0 + rng.uniform(0, 2, n_cells),
                                    rng.uniform(100.0, 900.0, n_cells)]),
    )


def make_regular_grid(nx, ny, cell_km=1.0, id_start=1):
    """Regular grid with smooth covariates."""
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    e = (ix.ravel() + 0.5) * cell_km
    n = (iy.ravel() + 0.5) * cell_km
    return GridSpec(
        cell_ids=np.arange(id_start, id_start + nx * ny, dtype=np.int64),
        centers=np.column_stack([e, n]),
        sizes=np.full((nx * ny, 2), cell_km),
        covariates=np.column_stack([63.0 + n / 111.0, 10.0 + e / 50.0,
                                    200.0 + 30.0 * e + 11.0 * n]),
    )


def make_field(grid, n_days=400, seed=0, start="2000-01-01"):
    rng = np.random.default_rng(seed)
    dates = daily_range(start, np.datetime64(start, "D") + np.timedelta64(n_days - 1, "D"))
    return Field(grid, dates, rng.normal(5.0, 3.0, (grid.n_cells, n_days)))


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(10, seed=3)
