import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stormgen.errors import IngestionError
from stormgen.grids import (CalendarIndex, Field, GridSpec, OverlapMap,
                            daily_range, load_field, nearest_neighbor_regrid,
                            overlap_from_grids, read_catchments, save_field,
                            upscale, write_catchments)

from conftest import make_field, make_grid, make_regular_grid


# ---------------------------------------------------------------- grid + IO

def test_grid_csv_roundtrip(tmp_path, small_grid):
    path = tmp_path / "grid.csv"
    small_grid.to_csv(path)
    back = GridSpec.from_csv(path)
    np.testing.assert_array_equal(back.cell_ids, small_grid.cell_ids)
    np.testing.assert_array_equal(back.centers, small_grid.centers)
    np.testing.assert_array_equal(back.covariates, small_grid.covariates)


def test_grid_rejects_duplicate_ids():
    with pytest.raises(IngestionError, match="unique"):
        GridSpec(np.array([1, 1]), np.zeros((2, 2)), np.ones((2, 2)),
                 np.ones((2, 3)))


def test_grid_rejects_degenerate_polygon():
    sizes = np.array([[1.0, 1.0], [1.0, 0.0]])
    with pytest.raises(IngestionError, match="degenerate"):
        GridSpec(np.array([1, 2]), np.zeros((2, 2)), sizes, np.ones((2, 3)))


def test_field_csv_and_binary_bit_identical(tmp_path, small_grid):
    f = make_field(small_grid, n_days=30, seed=11)
    save_field(f, tmp_path / "f.csv")
    save_field(f, tmp_path / "f.bin")
    a = load_field(tmp_path / "f.csv", small_grid)
    b = load_field(tmp_path / "f.bin", small_grid)
    np.testing.assert_array_equal(a.values, f.values)
    np.testing.assert_array_equal(b.values, f.values)
    np.testing.assert_array_equal(a.dates, f.dates)
    np.testing.assert_array_equal(b.dates, f.dates)


def test_field_roundtrip_two_cells_three_days(tmp_path):
    grid = make_regular_grid(2, 1)
    dates = daily_range("2001-05-01", "2001-05-03")
    f = Field(grid, dates, np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    save_field(f, tmp_path / "t.csv")
    back = load_field(tmp_path / "t.csv", grid)
    assert back.values.shape == (2, 3)
    np.testing.assert_array_equal(back.values, f.values)


def test_field_repeated_date_rejected(tmp_path):
    grid = make_regular_grid(2, 1)
    path = tmp_path / "bad.csv"
    path.write_text("date,cell_1,cell_2\n"
                    "2001-05-01,1,2\n2001-05-01,3,4\n2001-05-02,5,6\n")
    with pytest.raises(IngestionError, match="non-monotone time axis"):
        load_field(path, grid)


def test_field_nan_rejected_with_location(tmp_path):
    grid = make_regular_grid(2, 1)
    path = tmp_path / "bad.csv"
    path.write_text("date,cell_1,cell_2\n"
                    "2001-05-01,1,2\n2001-05-02,3,nan\n2001-05-03,5,6\n")
    with pytest.raises(IngestionError, match=r"cell 2.*2001-05-02"):
        load_field(path, grid)


def test_field_requires_daily_step():
    grid = make_regular_grid(1, 1)
    dates = np.array(["2001-01-01", "2001-01-03"], dtype="datetime64[D]")
    with pytest.raises(IngestionError, match="not daily"):
        Field(grid, dates, np.zeros((1, 2)))


def test_catchment_file_roundtrip(tmp_path):
    path = tmp_path / "catchments.csv"
    write_catchments({"A": np.array([1, 2, 3]), "B": np.array([7, 9])}, path)
    back = read_catchments(path)
    np.testing.assert_array_equal(back["A"], [1, 2, 3])
    np.testing.assert_array_equal(back["B"], [7, 9])


# ---------------------------------------------------------------- calendar

def test_calendar_feb29_shares_feb28():
    cal = CalendarIndex.from_dates(daily_range("2000-02-27", "2000-03-02"), 2000)
    assert cal.day_of_year.tolist() == [58, 59, 59, 60, 61]


def test_calendar_doy_range_and_increments():
    dates = daily_range("1957-01-01", "2005-12-31")
    cal = CalendarIndex.from_dates(dates, 1957)
    assert cal.day_of_year.min() == 1 and cal.day_of_year.max() == 365
    leap = (cal.year % 4 == 0) & ((cal.year % 100 != 0) | (cal.year % 400 == 0))
    feb29 = leap & (cal.month == 2) & (cal.day_of_year == 59)
    steps = np.diff(cal.day_of_year)
    within_year = np.diff(cal.dates).astype(int) == 1
    ordinary = ~feb29[1:] & (steps != -364)
    assert np.all(steps[within_year & ordinary][steps[within_year & ordinary] != 0] == 1)


def test_calendar_decade_normalization():
    cal = CalendarIndex.from_dates(daily_range("1967-06-01", "1967-06-01"), 1957)
    assert cal.dec_year[0] == pytest.approx(1.0)


# ---------------------------------------------------------------- upscaling

def _nested_pair():
    fine = make_regular_grid(4, 4, cell_km=1.0)
    coarse = make_regular_grid(2, 2, cell_km=2.0)
    return fine, coarse, overlap_from_grids(coarse, fine)


def test_upscale_constant_field():
    fine, coarse, ov = _nested_pair()
    f = Field(fine, daily_range("2001-01-01", "2001-01-03"),
              np.full((16, 3), 5.0))
    up = upscale(f, coarse, ov)
    np.testing.assert_allclose(up.values, 5.0)


def test_upscale_weighted_mean_arithmetic():
    # two fine cells with areas 1 and 3 inside one coarse cell
    fine = GridSpec(np.array([1, 2]),
                    centers=np.array([[0.5, 1.0], [2.0, 1.0]]),
                    sizes=np.array([[1.0, 1.0], [2.0, 1.5]]),
                    covariates=np.ones((2, 3)))
    coarse = GridSpec(np.array([10]), centers=np.array([[1.5, 1.0]]),
                      sizes=np.array([[3.0, 2.0]]), covariates=np.ones((1, 3)))
    ov = overlap_from_grids(coarse, fine)
    f = Field(fine, daily_range("2001-01-01", "2001-01-01"),
              np.array([[0.0], [4.0]]))
    up = upscale(f, coarse, ov)
    assert up.values[0, 0] == pytest.approx(3.0, abs=1e-12)


def test_upscale_matches_loop_oracle():
    rng = np.random.default_rng(5)
    fine = make_regular_grid(10, 10, cell_km=1.0)
    coarse = make_regular_grid(2, 2, cell_km=5.0)
    ov = overlap_from_grids(coarse, fine)
    f = Field(fine, daily_range("2001-01-01", "2001-01-07"),
              rng.normal(size=(100, 7)))
    up = upscale(f, coarse, ov)

    # brute-force: loop over overlap triplets
    expected = np.zeros((4, 7))
    wsum = np.zeros(4)
    for cid, fid, area in zip(ov.coarse_ids, ov.fine_ids, ov.areas_km2):
        ci = coarse.index_of([cid])[0]
        fi = fine.index_of([fid])[0]
        expected[ci] += area * f.values[fi]
        wsum[ci] += area
    expected /= wsum[:, None]
    np.testing.assert_allclose(up.values, expected, atol=1e-12)


def test_upscale_is_linear():
    rng = np.random.default_rng(6)
    fine, coarse, ov = _nested_pair()
    dates = daily_range("2001-01-01", "2001-01-05")
    xa = rng.normal(size=(16, 5))
    xb = rng.normal(size=(16, 5))
    a, b = 2.5, -0.7
    up_combo = upscale(Field(fine, dates, a * xa + b * xb), coarse, ov)
    up_a = upscale(Field(fine, dates, xa), coarse, ov)
    up_b = upscale(Field(fine, dates, xb), coarse, ov)
    np.testing.assert_allclose(up_combo.values,
                               a * up_a.values + b * up_b.values, atol=1e-12)


def test_upscale_zero_overlap_errors():
    fine = make_regular_grid(2, 2, cell_km=1.0)
    far = GridSpec(np.array([1]), centers=np.array([[100.0, 100.0]]),
                   sizes=np.array([[2.0, 2.0]]), covariates=np.ones((1, 3)))
    ov = overlap_from_grids(far, fine)
    f = Field(fine, daily_range("2001-01-01", "2001-01-01"), np.ones((4, 1)))
    with pytest.raises(IngestionError, match="no fine overlap"):
        upscale(f, far, ov)


def test_overlap_csv_roundtrip(tmp_path):
    _, _, ov = _nested_pair()
    ov.to_csv(tmp_path / "ov.csv")
    back = OverlapMap.from_csv(tmp_path / "ov.csv")
    np.testing.assert_array_equal(back.coarse_ids, ov.coarse_ids)
    np.testing.assert_allclose(back.areas_km2, ov.areas_km2)


def test_largest_intersection_tie_breaks_to_lowest_id():
    ov = OverlapMap(coarse_ids=np.array([7, 3]), fine_ids=np.array([1, 1]),
                    areas_km2=np.array([0.5, 0.5]))
    assert ov.largest_intersection([1])[0] == 3


def test_largest_intersection_prefers_bigger_area():
    ov = OverlapMap(coarse_ids=np.array([1, 2]), fine_ids=np.array([5, 5]),
                    areas_km2=np.array([0.4, 0.6]))
    assert ov.largest_intersection([5])[0] == 2


# ---------------------------------------------------------------- regridding

def test_nn_regrid_coincident_center():
    coarse = make_regular_grid(2, 2, cell_km=2.0)
    f = make_field(coarse, n_days=5, seed=1)
    fine = GridSpec(np.array([1]), centers=coarse.centers[[2]],
                    sizes=np.array([[0.5, 0.5]]), covariates=np.ones((1, 3)))
    re = nearest_neighbor_regrid(f, fine)
    np.testing.assert_array_equal(re.values[0], f.values[2])


def test_nn_regrid_tie_breaks_to_lowest_id():
    coarse = GridSpec(np.array([3, 7]),
                      centers=np.array([[0.0, 0.0], [2.0, 0.0]]),
                      sizes=np.ones((2, 2)), covariates=np.ones((2, 3)))
    f = Field(coarse, daily_range("2001-01-01", "2001-01-02"),
              np.array([[1.0, 2.0], [3.0, 4.0]]))
    fine = GridSpec(np.array([1]), centers=np.array([[1.0, 0.0]]),
                    sizes=np.ones((1, 2)), covariates=np.ones((1, 3)))
    re = nearest_neighbor_regrid(f, fine)
    np.testing.assert_array_equal(re.values[0], f.values[0])  # id 3 wins


def test_nn_regrid_matches_exhaustive_search():
    rng = np.random.default_rng(9)
    coarse = make_regular_grid(2, 1, cell_km=5.0)
    fine = make_regular_grid(5, 5, cell_km=1.0)
    f = Field(coarse, daily_range("2001-01-01", "2001-01-03"),
              rng.normal(size=(2, 3)))
    re = nearest_neighbor_regrid(f, fine)
    for i in range(fine.n_cells):
        d = np.linalg.norm(coarse.centers - fine.centers[i], axis=1)
        best = np.flatnonzero(d == d.min())
        expected = best[np.argmin(coarse.cell_ids[best])]
        np.testing.assert_array_equal(re.values[i], f.values[expected])


def test_nn_regrid_idempotent_on_same_grid():
    coarse = make_regular_grid(3, 3, cell_km=2.0)
    f = make_field(coarse, n_days=4, seed=2)
    re = nearest_neighbor_regrid(f, coarse)
    np.testing.assert_array_equal(re.values, f.values)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1957, max_value=2005),
       st.integers(min_value=1, max_value=365))
def test_calendar_day_of_year_bounds(year, offset):
    start = np.datetime64(f"{year}-01-01", "D") + np.timedelta64(offset - 1, "D")
    cal = CalendarIndex.from_dates(np.array([start]), 1957)
    assert 1 <= cal.day_of_year[0] <= 365
