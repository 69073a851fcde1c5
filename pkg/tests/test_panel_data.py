import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macrodml.errors import (
    DuplicateColumn,
    IndexMismatch,
    IrregularSpacing,
    MalformedRow,
    NonMonotoneTime,
    TooFewPoints,
    UnparseableTime,
)
from macrodml.panel_data import (
    FundFilter,
    FundMeta,
    TimeSeriesMatrix,
    common_range,
    filter_funds,
    int_to_month,
    load_fund_meta_csv,
    load_tscs_csv,
    month_range,
    month_to_int,
    quarterly_to_monthly,
    to_panel,
    write_fund_meta_csv,
    write_tscs_csv,
)

from conftest import make_tsm


# ---------------------------------------------------------------------------
# month arithmetic
# ---------------------------------------------------------------------------

def test_month_to_int_consecutive():
    assert month_to_int("2001-02") - month_to_int("2001-01") == 1
    assert month_to_int("2002-01") - month_to_int("2001-12") == 1


def test_month_rejects_garbage():
    for bad in ("2019-13", "2019-00", "201-05", "2019/05", "2019-5", "x"):
        with pytest.raises(UnparseableTime):
            month_to_int(bad)


@given(st.integers(min_value=0, max_value=12 * 9999 - 1))
def test_month_int_round_trip(count):
    assert month_to_int(int_to_month(count)) == count


def test_month_range():
    assert month_range("1999-11", 4) == ["1999-11", "1999-12", "2000-01", "2000-02"]


# ---------------------------------------------------------------------------
# TimeSeriesMatrix
# ---------------------------------------------------------------------------

def test_tsm_rejects_gap_in_index():
    with pytest.raises(NonMonotoneTime):
        TimeSeriesMatrix(["2000-01", "2000-03"], ["a"], np.zeros((2, 1)))


def test_tsm_rejects_duplicate_columns():
    with pytest.raises(DuplicateColumn):
        make_tsm(np.zeros((3, 2)), names=["a", "a"])


def test_tsm_column_select_restrict():
    mat = make_tsm(np.arange(12.0).reshape(4, 3), names=["a", "b", "c"])
    assert np.array_equal(mat.column("b"), [1.0, 4.0, 7.0, 10.0])
    sub = mat.select(["c", "a"])
    assert sub.columns == ["c", "a"]
    assert np.array_equal(sub.values[:, 0], mat.column("c"))
    cut = mat.restrict("2000-02", "2000-03")
    assert cut.time_index == ["2000-02", "2000-03"]
    assert np.array_equal(cut.values, mat.values[1:3])


def test_common_range_overlap_and_disjoint():
    a = make_tsm(np.zeros((5, 1)), start="2000-01")
    b = make_tsm(np.zeros((5, 1)), start="2000-03")
    assert common_range(a, b) == ("2000-03", "2000-05")
    c = make_tsm(np.zeros((2, 1)), start="2010-01")
    with pytest.raises(IndexMismatch):
        common_range(a, c)


# ---------------------------------------------------------------------------
# CSV round trips
# ---------------------------------------------------------------------------

def test_load_tscs_shape_and_missing(tmp_path):
    path = tmp_path / "wide.csv"
    path.write_text(
        "date,f1,f2\n"
        "2015-01,0.5,\n"
        "2015-02,-0.25,1.0\n"
        "2015-03,0.125,2.5\n"
    )
    mat = load_tscs_csv(path)
    assert (mat.n_months, len(mat.columns)) == (3, 2)
    assert np.isnan(mat.values[0, 1])
    assert mat.column("f1")[1] == -0.25


def test_load_tscs_rejects_bad_cells(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,f1\n2015-01,zebra\n")
    with pytest.raises(MalformedRow):
        load_tscs_csv(path)
    path.write_text("date,f1\n2015-01\n")
    with pytest.raises(MalformedRow):
        load_tscs_csv(path)


def test_tscs_round_trip_bitwise(tmp_path, rng):
    values = rng.standard_normal((24, 5))
    values[3, 2] = np.nan
    mat = make_tsm(values, start="1995-06", names=list("abcde"))
    path = tmp_path / "rt.csv"
    write_tscs_csv(mat, path)
    back = load_tscs_csv(path)
    assert back.time_index == mat.time_index
    assert back.columns == mat.columns
    assert np.array_equal(back.values, mat.values, equal_nan=True)


def test_fund_meta_round_trip(tmp_path):
    catalog = [
        FundMeta("AAA", "FixedIncome", "2001-05", 350.0, "Active"),
        FundMeta("BBB", "Equity", "1999-12", 20.0, "Passive"),
    ]
    path = tmp_path / "meta.csv"
    write_fund_meta_csv(catalog, path)
    assert load_fund_meta_csv(path) == catalog


def test_fund_meta_duplicate_ticker(tmp_path):
    path = tmp_path / "meta.csv"
    path.write_text(
        "ticker,asset_class,inception,aum_musd,managed\n"
        "AAA,Equity,2000-01,10.0,Active\n"
        "AAA,Equity,2000-01,10.0,Active\n"
    )
    with pytest.raises(DuplicateColumn):
        load_fund_meta_csv(path)


# ---------------------------------------------------------------------------
# fund filtering
# ---------------------------------------------------------------------------

def _catalog():
    return [
        FundMeta("A", "FixedIncome", "2000-01", 100.0, "Active"),
        FundMeta("B", "FixedIncome", "2005-01", 20.0, "Active"),
        FundMeta("C", "FixedIncome", "2000-01", 19.9, "Active"),
        FundMeta("D", "Equity", "2000-01", 500.0, "Active"),
        FundMeta("E", "FixedIncome", "2000-01", 80.0, "Passive"),
    ]


def test_min_aum_is_inclusive():
    kept = filter_funds(_catalog(), FundFilter(min_aum=20.0))
    assert [m.ticker for m in kept] == ["A", "B", "D", "E"]


def test_filter_cascade_is_monotone():
    # applying criteria one after another only ever shrinks the catalog
    catalog = _catalog()
    stages = [
        FundFilter(),
        FundFilter(asset_classes={"FixedIncome"}),
        FundFilter(asset_classes={"FixedIncome"}, managed="Active"),
        FundFilter(asset_classes={"FixedIncome"}, managed="Active", min_aum=20.0),
        FundFilter(asset_classes={"FixedIncome"}, managed="Active", min_aum=20.0,
                   min_inception="2001-01"),
    ]
    sizes = [len(filter_funds(catalog, f)) for f in stages]
    assert sizes == [5, 4, 3, 2, 1]
    assert sizes == sorted(sizes, reverse=True)


def test_filter_idempotent():
    crit = FundFilter(min_aum=20.0, asset_classes={"FixedIncome"})
    once = filter_funds(_catalog(), crit)
    assert filter_funds(once, crit) == once


# ---------------------------------------------------------------------------
# quarterly resampling
# ---------------------------------------------------------------------------

def test_quarterly_repeat():
    series = [("2019-01", 5.0), ("2019-04", 7.0)]
    out = quarterly_to_monthly(series, "repeat")
    assert out == [
        ("2019-01", 5.0), ("2019-02", 5.0), ("2019-03", 5.0),
        ("2019-04", 7.0), ("2019-05", 7.0), ("2019-06", 7.0),
    ]


def test_quarterly_interpolate():
    series = [("2019-01", 0.0), ("2019-04", 3.0)]
    out = quarterly_to_monthly(series, "interpolate")
    assert out == [
        ("2019-01", 0.0), ("2019-02", 1.0), ("2019-03", 2.0), ("2019-04", 3.0),
    ]


def test_quarterly_rejects_irregular_spacing():
    with pytest.raises(IrregularSpacing):
        quarterly_to_monthly([("2019-01", 0.0), ("2019-03", 1.0)], "repeat")


def test_quarterly_interpolate_needs_two_points():
    with pytest.raises(TooFewPoints):
        quarterly_to_monthly([("2019-01", 0.0)], "interpolate")
    # repeat is fine with a single quarter
    assert len(quarterly_to_monthly([("2019-01", 0.0)], "repeat")) == 3


def test_quarterly_modes_agree_on_constant():
    series = [("2019-01", 2.0), ("2019-04", 2.0), ("2019-07", 2.0)]
    rep = dict(quarterly_to_monthly(series, "repeat"))
    lin = dict(quarterly_to_monthly(series, "interpolate"))
    for month, value in lin.items():
        assert rep[month] == value == 2.0


# ---------------------------------------------------------------------------
# panel construction
# ---------------------------------------------------------------------------

def _full_inputs(T=10, n_funds=3, k=2, seed=0):
    rng = np.random.default_rng(seed)
    funds = make_tsm(rng.standard_normal((T, n_funds)),
                     names=[f"F{i}" for i in range(n_funds)])
    controls = make_tsm(rng.standard_normal((T, k)), names=[f"c{j}" for j in range(k)])
    treatment = [(m, float(v)) for m, v in zip(funds.time_index, rng.standard_normal(T))]
    return funds, treatment, controls


def test_to_panel_row_count_complete_data():
    funds, treatment, controls = _full_inputs(T=10, n_funds=3)
    panel = to_panel(funds, treatment, controls, lag_order=2)
    # each fund contributes T - p complete windows
    assert panel.n_rows == 3 * (10 - 2)
    assert panel.x.shape[1] == len(panel.x_names)


def test_to_panel_p0_keeps_all_complete_rows():
    funds, treatment, controls = _full_inputs(T=6, n_funds=2)
    panel = to_panel(funds, treatment, controls, lag_order=0)
    assert panel.n_rows == 2 * 6
    assert panel.x_names == controls.columns


def test_to_panel_x_layout_and_values():
    funds, treatment, controls = _full_inputs(T=8, n_funds=1, k=2)
    panel = to_panel(funds, treatment, controls, lag_order=2, treatment_name="rate")
    assert panel.x_names == [
        "c0", "c1",
        "y_lag1", "rate_lag1", "c0_lag1", "c1_lag1",
        "y_lag2", "rate_lag2", "c0_lag2", "c1_lag2",
    ]
    # first panel row sits at t = p; check every lag entry by hand
    t = 2
    y = funds.column("F0")
    d = np.array([v for _, v in treatment])
    X = controls.values
    row = panel.x[0]
    assert panel.times[0] == funds.time_index[t]
    assert panel.y[0] == y[t] and panel.d[0] == d[t]
    expect = [X[t, 0], X[t, 1],
              y[t - 1], d[t - 1], X[t - 1, 0], X[t - 1, 1],
              y[t - 2], d[t - 2], X[t - 2, 0], X[t - 2, 1]]
    assert np.array_equal(row, expect)


def test_to_panel_missing_month_blocks_windows():
    funds, treatment, controls = _full_inputs(T=10, n_funds=1)
    y = funds.values.copy()
    y[4, 0] = np.nan  # one missing fund return
    funds = TimeSeriesMatrix(funds.time_index, funds.columns, y)
    panel = to_panel(funds, treatment, controls, lag_order=2)
    # rows needing month index 4 (t = 4, 5, 6) all disappear
    assert panel.n_rows == (10 - 2) - 3
    months = set(panel.times)
    for t in (4, 5, 6):
        assert funds.time_index[t] not in months


def test_to_panel_missing_treatment_blocks_all_funds():
    funds, treatment, controls = _full_inputs(T=10, n_funds=2)
    treatment = list(treatment)
    treatment[9] = (treatment[9][0], float("nan"))
    panel = to_panel(funds, treatment, controls, lag_order=1)
    assert panel.n_rows == 2 * ((10 - 1) - 1)


def test_to_panel_brute_force_enumeration(rng):
    # cross-check the window logic against a direct re-implementation
    T, n_funds, k, p = 12, 2, 2, 3
    funds_v = rng.standard_normal((T, n_funds))
    controls_v = rng.standard_normal((T, k))
    d_v = rng.standard_normal(T)
    # sprinkle missing values everywhere
    funds_v[rng.random((T, n_funds)) < 0.2] = np.nan
    controls_v[rng.random((T, k)) < 0.1] = np.nan
    d_v[rng.random(T) < 0.1] = np.nan

    funds = make_tsm(funds_v, names=["FA", "FB"])
    controls = make_tsm(controls_v)
    treatment = [(m, float(v)) for m, v in zip(funds.time_index, d_v)]
    panel = to_panel(funds, treatment, controls, lag_order=p)

    expected = []
    for f, ticker in enumerate(funds.columns):
        for t in range(p, T):
            window = range(t - p, t + 1)
            ok = all(
                np.isfinite(funds_v[s, f]) and np.isfinite(d_v[s])
                and np.all(np.isfinite(controls_v[s]))
                for s in window
            )
            if ok:
                expected.append((ticker, funds.time_index[t]))
    assert list(zip(panel.unit_ids, panel.times)) == sorted(expected)


def test_to_panel_requires_shared_index():
    funds, treatment, controls = _full_inputs(T=6, n_funds=1)
    other = make_tsm(np.zeros((6, 2)), start="1990-01")
    with pytest.raises(IndexMismatch):
        to_panel(funds, treatment, other, lag_order=1)


@settings(max_examples=25, deadline=None)
@given(T=st.integers(min_value=4, max_value=12), p=st.integers(min_value=0, max_value=3))
def test_to_panel_complete_data_row_count_law(T, p):
    if T <= p:
        return
    funds, treatment, controls = _full_inputs(T=T, n_funds=2, seed=T * 7 + p)
    panel = to_panel(funds, treatment, controls, lag_order=p)
    assert panel.n_rows == 2 * (T - p)
    # rows are sorted by ticker then month
    order = list(zip(panel.unit_ids, [month_to_int(t) for t in panel.times]))
    assert order == sorted(order)
