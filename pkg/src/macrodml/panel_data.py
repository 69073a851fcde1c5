"""Wide time-series-cross-section data model, CSV ingestion, and panel reshaping.

The wide form is a months-by-series matrix (fund returns or macro variables);
the long form is one row per (fund, month) with outcome, treatment, and a
control vector including lagged values.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DuplicateColumn,
    IndexMismatch,
    IrregularSpacing,
    MalformedRow,
    NonMonotoneTime,
    TooFewPoints,
    UnparseableTime,
)

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")

ASSET_CLASSES = ("FixedIncome", "Equity")
MANAGED_STYLES = ("Active", "Passive")

#: a monthly series as (YYYY-MM, value) pairs
Series = list[tuple[str, float]]


def month_to_int(month: str) -> int:
    """Map 'YYYY-MM' to a running month count (1 month apart <=> difference 1)."""
    m = _MONTH_RE.match(month)
    if not m:
        raise UnparseableTime(f"expected YYYY-MM, got {month!r}")
    year, mon = int(m.group(1)), int(m.group(2))
    if not 1 <= mon <= 12:
        raise UnparseableTime(f"month out of range in {month!r}")
    return year * 12 + (mon - 1)


def int_to_month(count: int) -> str:
    year, mon = divmod(count, 12)
    return f"{year:04d}-{mon + 1:02d}"


def month_range(start: str, n: int) -> list[str]:
    """n consecutive months starting at `start`."""
    base = month_to_int(start)
    return [int_to_month(base + i) for i in range(n)]


def _check_monthly(time_index: list[str]) -> None:
    counts = [month_to_int(t) for t in time_index]
    for prev, cur, month in zip(counts, counts[1:], time_index[1:]):
        if cur != prev + 1:
            raise NonMonotoneTime(
                f"time index must advance by exactly one month, broken at {month!r}"
            )


@dataclass
class TimeSeriesMatrix:
    """Months-by-series matrix; NaN entries are missing values."""

    time_index: list[str]
    columns: list[str]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.time_index), len(self.columns)):
            raise DataError(
                f"value matrix shape {self.values.shape} does not match "
                f"{len(self.time_index)} months x {len(self.columns)} columns"
            )
        if len(set(self.columns)) != len(self.columns):
            raise DuplicateColumn("column names must be unique")
        _check_monthly(self.time_index)

    @property
    def n_months(self) -> int:
        return len(self.time_index)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, names: list[str]) -> "TimeSeriesMatrix":
        idx = [self.columns.index(n) for n in names]
        return TimeSeriesMatrix(list(self.time_index), list(names), self.values[:, idx])

    def restrict(self, start: str, end: str) -> "TimeSeriesMatrix":
        """Contiguous sub-range [start, end], both inclusive."""
        lo = self.time_index.index(start)
        hi = self.time_index.index(end)
        return TimeSeriesMatrix(
            self.time_index[lo : hi + 1], list(self.columns), self.values[lo : hi + 1]
        )


def common_range(a: TimeSeriesMatrix, b: TimeSeriesMatrix) -> tuple[str, str]:
    """Overlapping month range of two matrices; IndexMismatch if disjoint."""
    start = max(a.time_index[0], b.time_index[0], key=month_to_int)
    end = min(a.time_index[-1], b.time_index[-1], key=month_to_int)
    if month_to_int(start) > month_to_int(end):
        raise IndexMismatch("time ranges do not overlap")
    return start, end


@dataclass(frozen=True)
class FundMeta:
    """Catalog entry for one fund."""

    ticker: str
    asset_class: str
    inception: str
    aum_musd: float
    managed: str

    def __post_init__(self) -> None:
        if not self.ticker:
            raise DataError("ticker must be non-empty")
        if self.asset_class not in ASSET_CLASSES:
            raise DataError(f"unknown asset class {self.asset_class!r}")
        if self.managed not in MANAGED_STYLES:
            raise DataError(f"unknown management style {self.managed!r}")
        if self.aum_musd < 0:
            raise DataError("aum_musd must be >= 0")
        month_to_int(self.inception)


@dataclass
class FundFilter:
    """Metadata screen; None fields impose no constraint."""

    min_aum: float | None = None
    asset_classes: set[str] | None = None
    managed: str | None = None
    min_inception: str | None = None


@dataclass
class PanelTable:
    """Long-form panel: one row per (fund, month) with complete lag window."""

    unit_ids: list[str]
    times: list[str]
    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    x_names: list[str]

    def __post_init__(self) -> None:
        n = len(self.unit_ids)
        self.y = np.asarray(self.y, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x.reshape(n, -1)
        if not (len(self.times) == self.y.shape[0] == self.d.shape[0] == self.x.shape[0] == n):
            raise DataError("panel column lengths disagree")
        if self.x.shape[1] != len(self.x_names):
            raise DataError("x width does not match x_names")
        if len(set(zip(self.unit_ids, self.times))) != n:
            raise DataError("(unit, time) pairs must be unique")

    @property
    def n_rows(self) -> int:
        return len(self.unit_ids)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def load_tscs_csv(path, time_column: str = "date") -> TimeSeriesMatrix:
    """Load a wide CSV (header row, one time column, one column per series).

    Empty cells become NaN. Column order follows the file.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow("file has no header row") from None
        if header.count(time_column) != 1:
            raise DataError(f"expected exactly one {time_column!r} column")
        if len(set(header)) != len(header):
            raise DuplicateColumn("column names must be unique")
        t_pos = header.index(time_column)
        names = [h for i, h in enumerate(header) if i != t_pos]

        months: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise MalformedRow(
                    f"line {lineno}: expected {len(header)} cells, got {len(row)}"
                )
            month = row[t_pos]
            month_to_int(month)  # raises UnparseableTime
            months.append(month)
            cells = []
            for i, cell in enumerate(row):
                if i == t_pos:
                    continue
                if cell == "":
                    cells.append(np.nan)
                else:
                    try:
                        cells.append(float(cell))
                    except ValueError:
                        raise MalformedRow(
                            f"line {lineno}: cannot parse {cell!r} as a number"
                        ) from None
            rows.append(cells)

    values = np.array(rows, dtype=float) if rows else np.empty((0, len(names)))
    return TimeSeriesMatrix(months, names, values)


def write_tscs_csv(matrix: TimeSeriesMatrix, path, time_column: str = "date") -> None:
    """Inverse of load_tscs_csv: NaN as empty cell, full-precision floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([time_column] + matrix.columns)
        for month, row in zip(matrix.time_index, matrix.values):
            writer.writerow([month] + ["" if np.isnan(v) else repr(float(v)) for v in row])


def load_fund_meta_csv(path) -> list[FundMeta]:
    """Load the fund-metadata sidecar (ticker,asset_class,inception,aum_musd,managed)."""
    catalog = []
    seen = set()
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            meta = FundMeta(
                ticker=rec["ticker"],
                asset_class=rec["asset_class"],
                inception=rec["inception"],
                aum_musd=float(rec["aum_musd"]),
                managed=rec["managed"],
            )
            if meta.ticker in seen:
                raise DuplicateColumn(f"duplicate ticker {meta.ticker!r}")
            seen.add(meta.ticker)
            catalog.append(meta)
    return catalog


def write_fund_meta_csv(catalog: list[FundMeta], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ticker", "asset_class", "inception", "aum_musd", "managed"])
        for m in catalog:
            writer.writerow([m.ticker, m.asset_class, m.inception, repr(float(m.aum_musd)), m.managed])


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def filter_funds(catalog: list[FundMeta], criteria: FundFilter) -> list[FundMeta]:
    """Subset of the catalog satisfying every criterion, original order kept.

    Thresholds are inclusive (min_aum keeps aum_musd >= min_aum).
    """
    out = []
    for fund in catalog:
        if criteria.min_aum is not None and fund.aum_musd < criteria.min_aum:
            continue
        if criteria.asset_classes is not None and fund.asset_class not in criteria.asset_classes:
            continue
        if criteria.managed is not None and fund.managed != criteria.managed:
            continue
        if criteria.min_inception is not None and month_to_int(fund.inception) < month_to_int(
            criteria.min_inception
        ):
            continue
        out.append(fund)
    return out


def quarterly_to_monthly(series: Series, mode: str) -> Series:
    """Resample a quarterly series to monthly.

    'repeat' copies each quarterly value into its three months, so the output
    runs through the last input month + 2. 'interpolate' anchors each value at
    the quarter's first month and fills linearly, ending at the last input
    month.
    """
    if mode not in ("repeat", "interpolate"):
        raise ValueError(f"mode must be 'repeat' or 'interpolate', got {mode!r}")
    if not series:
        raise TooFewPoints("empty series")
    counts = [month_to_int(m) for m, _ in series]
    for prev, cur in zip(counts, counts[1:]):
        if cur - prev != 3:
            raise IrregularSpacing(
                f"expected 3-month spacing, found {cur - prev} between "
                f"{int_to_month(prev)} and {int_to_month(cur)}"
            )
    if mode == "interpolate" and len(series) < 2:
        raise TooFewPoints("interpolation needs at least 2 points")

    out: Series = []
    if mode == "repeat":
        for (month, value), base in zip(series, counts):
            for k in range(3):
                out.append((int_to_month(base + k), value))
    else:
        for (m0, v0), (m1, v1), base in zip(series, series[1:], counts):
            for k in range(3):
                out.append((int_to_month(base + k), v0 + (v1 - v0) * k / 3.0))
        out.append(series[-1])
    return out


def to_panel(
    funds: TimeSeriesMatrix,
    treatment: Series,
    controls: TimeSeriesMatrix,
    lag_order: int,
    treatment_name: str = "d",
) -> PanelTable:
    """Reshape wide data into the long panel the learners consume.

    One row per (fund, month) where the fund return, the treatment, all
    controls, and every one of the `lag_order` lags of (return, treatment,
    controls) are present. Months with any missing required value are dropped
    per fund, not globally. Rows are ordered by fund ticker, then month.

    The control vector is [controls at t] followed, for each lag j = 1..p,
    by [y_lag{j}, {treatment_name}_lag{j}, <control>_lag{j}...].
    """
    if lag_order < 0:
        raise ValueError("lag_order must be >= 0")
    t_months = [m for m, _ in treatment]
    if t_months != funds.time_index or controls.time_index != funds.time_index:
        raise IndexMismatch("funds, treatment, and controls must share the time index")

    p = lag_order
    T = funds.n_months
    d = np.array([v for _, v in treatment], dtype=float)
    X = controls.values
    base_ok = np.isfinite(d) & np.all(np.isfinite(X), axis=1)

    x_names = list(controls.columns)
    for j in range(1, p + 1):
        x_names.append(f"y_lag{j}")
        x_names.append(f"{treatment_name}_lag{j}")
        x_names.extend(f"{c}_lag{j}" for c in controls.columns)

    unit_ids: list[str] = []
    times: list[str] = []
    y_rows: list[float] = []
    d_rows: list[float] = []
    x_rows: list[np.ndarray] = []

    for ticker in sorted(funds.columns):
        y_f = funds.column(ticker)
        ok = base_ok & np.isfinite(y_f)
        if p == 0:
            valid = ok
        else:
            window = np.convolve(ok.astype(int), np.ones(p + 1, dtype=int), mode="valid")
            valid = np.zeros(T, dtype=bool)
            valid[p:] = window == p + 1
        for t in np.flatnonzero(valid):
            parts = [X[t]]
            for j in range(1, p + 1):
                parts.append([y_f[t - j], d[t - j]])
                parts.append(X[t - j])
            unit_ids.append(ticker)
            times.append(funds.time_index[t])
            y_rows.append(y_f[t])
            d_rows.append(d[t])
            x_rows.append(np.concatenate(parts))

    x = np.array(x_rows, dtype=float) if x_rows else np.empty((0, len(x_names)))
    return PanelTable(unit_ids, times, np.array(y_rows), np.array(d_rows), x, x_names)
