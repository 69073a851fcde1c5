"""Statistical preprocessing chain: differencing, unit-root screening,
lag construction, VAR lag-order selection, per-unit mean encoding, and
correlation/PCA diagnostics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstantColumn,
    DataError,
    EmptyTrainMask,
    InsufficientData,
    NotSymmetric,
    SingularCovariance,
    SingularRegression,
    TooShort,
)
from .panel_data import PanelTable, TimeSeriesMatrix

ADF_LEVELS = ("1%", "5%", "10%")

# Dickey-Fuller critical values (constant, no trend) for the t-ratio on the
# lagged level. Simulated with synth.df_critical_values at 200,000
# replications per row (driftless Gaussian random walks, base seed 20240901;
# the infinity row uses n=5000). Regenerate with scripts/make_adf_table.py.
_ADF_CRIT_ROWS: dict[float, dict[str, float]] = {
    50: {"1%": -3.554, "5%": -2.918, "10%": -2.595},
    100: {"1%": -3.493, "5%": -2.891, "10%": -2.582},
    250: {"1%": -3.457, "5%": -2.875, "10%": -2.578},
    500: {"1%": -3.447, "5%": -2.867, "10%": -2.567},
    math.inf: {"1%": -3.435, "5%": -2.856, "10%": -2.563},
}


def adf_critical_values(n: int) -> dict[str, float]:
    """Table lookup with linear interpolation on 1/n; clamped below n=50."""
    if n < 50:
        return dict(_ADF_CRIT_ROWS[50])
    # knots ordered by x = 1/n ascending: infinity first
    knots = sorted(_ADF_CRIT_ROWS, key=lambda size: 0.0 if math.isinf(size) else 1.0 / size)
    xs = [0.0 if math.isinf(size) else 1.0 / size for size in knots]
    x = 1.0 / n
    for (x0, k0), (x1, k1) in zip(zip(xs, knots), zip(xs[1:], knots[1:])):
        if x0 <= x <= x1:
            w = 0.0 if x1 == x0 else (x - x0) / (x1 - x0)
            return {
                level: (1 - w) * _ADF_CRIT_ROWS[k0][level] + w * _ADF_CRIT_ROWS[k1][level]
                for level in ADF_LEVELS
            }
    return dict(_ADF_CRIT_ROWS[knots[0]])


@dataclass
class AdfReport:
    """Unit-root test outcome for one series."""

    statistic: float
    lag_order: int
    critical_values: dict[str, float]
    verdict: str  # "stationary" | "non-stationary"
    level: str

    @property
    def stationary(self) -> bool:
        return self.verdict == "stationary"


@dataclass
class CorrPcaReport:
    corr: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray  # orthonormal columns, one per eigenvalue
    explained_ratio: np.ndarray


@dataclass
class StationarityScreen:
    kept: TimeSeriesMatrix
    dropped: list[tuple[str, AdfReport]]
    reports: dict[str, AdfReport]


def first_difference(series) -> np.ndarray:
    """out[i] = series[i+1] - series[i]; length shrinks by one."""
    values = np.asarray(series, dtype=float)
    if values.size < 2:
        raise TooShort("need at least 2 observations to difference")
    return np.diff(values)


def difference_matrix(matrix: TimeSeriesMatrix) -> TimeSeriesMatrix:
    """First-difference every column; the first month drops out.

    NaN propagates: a difference is missing if either endpoint is.
    """
    if matrix.n_months < 2:
        raise TooShort("need at least 2 months to difference")
    return TimeSeriesMatrix(
        matrix.time_index[1:],
        list(matrix.columns),
        matrix.values[1:] - matrix.values[:-1],
    )


def _ols_with_se(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """OLS via QR with coefficient standard errors.

    Returns (beta, se, residuals). Raises SingularRegression when the design
    is rank deficient or has no residual degrees of freedom.
    """
    n, k = X.shape
    if n <= k:
        raise SingularRegression("no residual degrees of freedom")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= max(n, k) * np.finfo(float).eps * max(diag.max(), 1.0):
        raise SingularRegression("design matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    s2 = float(resid @ resid) / (n - k)
    r_inv = np.linalg.solve(R, np.eye(k))
    se = np.sqrt(s2 * np.sum(r_inv**2, axis=1))
    return beta, se, resid


def schwert_lag(n: int) -> int:
    """Rule-of-thumb augmentation order: floor(12 * (n/100)^(1/4))."""
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(series, level: str = "5%", max_lag="auto") -> AdfReport:
    """Augmented Dickey-Fuller test with a constant and no trend.

    Regresses the first difference on a constant, the lagged level, and
    `max_lag` lagged differences; the statistic is the t-ratio on the lagged
    level. 'auto' picks the lag by Schwert's rule, capped so the regression
    keeps at least one residual degree of freedom.
    """
    if level not in ADF_LEVELS:
        raise ValueError(f"level must be one of {ADF_LEVELS}")
    y = np.asarray(series, dtype=float)
    n = int(y.size)
    if n < 20:
        raise TooShort(f"need at least 20 observations, got {n}")
    cap = (n - 4) // 2
    if max_lag == "auto":
        k = min(schwert_lag(n), cap)
    else:
        k = int(max_lag)
        if k < 0:
            raise ValueError("max_lag must be >= 0")
        if k > cap:
            raise TooShort(f"max_lag {k} leaves no degrees of freedom at n={n}")

    dy = np.diff(y)
    nobs = n - 1 - k
    cols = [np.ones(nobs), y[k : n - 1]]
    for j in range(1, k + 1):
        cols.append(dy[k - j : n - 1 - j])
    X = np.column_stack(cols)
    beta, se, _ = _ols_with_se(X, dy[k:])
    stat = float(beta[1] / se[1])

    crit = adf_critical_values(n)
    verdict = "stationary" if stat < crit[level] else "non-stationary"
    return AdfReport(stat, k, crit, verdict, level)


def screen_stationarity(
    vars: TimeSeriesMatrix, level: str = "5%", max_lag="auto"
) -> StationarityScreen:
    """Drop every column whose ADF verdict is non-stationary.

    Missing values are removed per column before testing. Test errors are
    re-raised with the offending column name attached.
    """
    kept_names: list[str] = []
    dropped: list[tuple[str, AdfReport]] = []
    reports: dict[str, AdfReport] = {}
    for name in vars.columns:
        col = vars.column(name)
        col = col[np.isfinite(col)]
        try:
            report = adf_test(col, level=level, max_lag=max_lag)
        except (TooShort, SingularRegression) as exc:
            raise type(exc)(f"column {name!r}: {exc}") from exc
        reports[name] = report
        if report.stationary:
            kept_names.append(name)
        else:
            dropped.append((name, report))
    return StationarityScreen(vars.select(kept_names), dropped, reports)


def write_screen_audit_csv(screen: StationarityScreen, path) -> None:
    """Audit trail, one row per tested variable."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "adf_stat", "crit_5pct", "verdict"])
        for name, report in screen.reports.items():
            writer.writerow(
                [name, repr(report.statistic), repr(report.critical_values["5%"]), report.verdict]
            )


def select_lag_var_aic(vars: TimeSeriesMatrix, p_max: int) -> int:
    """VAR lag order minimizing AIC over p = 1..p_max.

    Each candidate is fit by per-equation OLS on the common sample of length
    T_eff = T - p_max; AIC(p) = ln det(Sigma_p) + 2(K^2 p + K)/T_eff with the
    degrees-of-freedom-adjusted residual covariance Sigma_p =
    E'E / (T_eff - (K p + 1)). Ties break toward the smaller lag.
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    X = vars.values
    if not np.all(np.isfinite(X)):
        raise InsufficientData("lag selection requires a complete (no-missing) matrix")
    T, K = X.shape
    if T <= K * p_max + 1 or T - p_max < K * p_max + 2:
        raise InsufficientData(
            f"T={T} is too short for K={K}, p_max={p_max}"
        )
    t_eff = T - p_max
    targets = X[p_max:]

    best_p, best_aic = None, None
    for p in range(1, p_max + 1):
        blocks = [np.ones((t_eff, 1))]
        for j in range(1, p + 1):
            blocks.append(X[p_max - j : T - j])
        Z = np.hstack(blocks)
        coef, *_ = np.linalg.lstsq(Z, targets, rcond=None)
        resid = targets - Z @ coef
        sigma = resid.T @ resid / (t_eff - (K * p + 1))
        sign, logdet = np.linalg.slogdet(sigma)
        if sign <= 0:
            raise SingularCovariance(f"residual covariance singular at p={p}")
        aic = logdet + 2.0 * (K * K * p + K) / t_eff
        if best_aic is None or aic < best_aic:
            best_p, best_aic = p, aic
    return int(best_p)


def build_lags(matrix: TimeSeriesMatrix, p: int) -> TimeSeriesMatrix:
    """Widen a matrix with lag columns <var>_lag1 .. <var>_lagp.

    The first j entries of each lag-j column are NaN, which marks those rows
    invalid for panel construction downstream.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    names = list(matrix.columns)
    cols = [matrix.values]
    for j in range(1, p + 1):
        shifted = np.full_like(matrix.values, np.nan)
        shifted[j:] = matrix.values[:-j]
        cols.append(shifted)
        names.extend(f"{c}_lag{j}" for c in matrix.columns)
    return TimeSeriesMatrix(list(matrix.time_index), names, np.hstack(cols))


def unit_train_means(
    unit_ids, columns: np.ndarray, train_mask: np.ndarray
) -> np.ndarray:
    """Per-unit means of each column over training rows, broadcast to all rows.

    Units absent from the training rows receive the global training mean of
    the column. Only training rows ever enter a mean.
    """
    train_mask = np.asarray(train_mask, dtype=bool)
    if not train_mask.any():
        raise EmptyTrainMask("training mask selects no rows")
    columns = np.atleast_2d(np.asarray(columns, dtype=float))
    if columns.shape[0] != train_mask.size:
        columns = columns.T
    uniq, codes = np.unique(np.asarray(unit_ids), return_inverse=True)
    n_units = uniq.size
    counts = np.bincount(codes[train_mask], minlength=n_units)
    out = np.empty_like(columns)
    for j in range(columns.shape[1]):
        col = columns[:, j]
        sums = np.bincount(codes[train_mask], weights=col[train_mask], minlength=n_units)
        global_mean = col[train_mask].mean()
        means = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
        out[:, j] = means[codes]
    return out


def means_encode(
    panel: PanelTable, train_mask, include_outcome: bool = True
) -> PanelTable:
    """Append per-unit mean columns (fixed-effect device) to a panel.

    Means are computed only on `train_mask` rows of each unit and attached to
    every row of that unit, including evaluation rows. With `include_outcome`
    the per-unit outcome mean is appended too.
    """
    train_mask = np.asarray(train_mask, dtype=bool)
    if train_mask.shape != (panel.n_rows,):
        raise DataError("train_mask length must equal the panel row count")
    base = panel.x
    names = [f"{name}_unit_mean" for name in panel.x_names]
    if include_outcome:
        base = np.column_stack([base, panel.y])
        names.append("y_unit_mean")
    encoded = unit_train_means(panel.unit_ids, base, train_mask)
    return PanelTable(
        list(panel.unit_ids),
        list(panel.times),
        panel.y.copy(),
        panel.d.copy(),
        np.hstack([panel.x, encoded]),
        list(panel.x_names) + names,
    )


def correlation_matrix(vars: TimeSeriesMatrix) -> np.ndarray:
    """Pearson correlations with pairwise-complete observations."""
    X = vars.values
    K = X.shape[1]
    finite = np.isfinite(X)
    for j, name in enumerate(vars.columns):
        col = X[finite[:, j], j]
        if col.size and np.ptp(col) == 0.0:
            raise ConstantColumn(f"column {name!r} is constant")
    corr = np.eye(K)
    for i in range(K):
        for j in range(i + 1, K):
            mask = finite[:, i] & finite[:, j]
            if mask.sum() < 2:
                raise DataError(
                    f"columns {vars.columns[i]!r} and {vars.columns[j]!r} share "
                    "fewer than 2 observations"
                )
            a = X[mask, i] - X[mask, i].mean()
            b = X[mask, j] - X[mask, j].mean()
            denom = math.sqrt(float(a @ a) * float(b @ b))
            if denom == 0.0:
                raise ConstantColumn(
                    f"columns {vars.columns[i]!r}/{vars.columns[j]!r} are constant "
                    "on their shared observations"
                )
            corr[i, j] = corr[j, i] = min(1.0, max(-1.0, float(a @ b) / denom))
    return corr


def pca_corr(corr: np.ndarray) -> CorrPcaReport:
    """Eigen-decomposition of a correlation matrix, eigenvalues descending.

    Component signs are fixed so the largest-magnitude loading of each vector
    is positive, making the output independent of the eigen-solver.
    """
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise NotSymmetric("correlation matrix must be square")
    if not np.allclose(corr, corr.T, atol=1e-8):
        raise NotSymmetric("correlation matrix must be symmetric")
    eigenvalues, vectors = np.linalg.eigh(corr)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    # numerical noise only; a genuine correlation matrix is PSD
    eigenvalues[(eigenvalues < 0) & (eigenvalues > -1e-10)] = 0.0
    for j in range(vectors.shape[1]):
        lead = np.argmax(np.abs(vectors[:, j]))
        if vectors[lead, j] < 0:
            vectors[:, j] = -vectors[:, j]
    explained = eigenvalues / np.trace(corr)
    return CorrPcaReport(corr, eigenvalues, vectors, explained)
