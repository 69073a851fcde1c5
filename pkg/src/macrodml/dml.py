"""Cross-fitted double machine learning for the partially linear model

    y = theta * d + g(x) + u,        d = m(x) + v.

Nuisances g and m are fit on held-out folds; the target coefficient comes
from the orthogonal score on the stacked out-of-fold residuals, so
first-order errors in either nuisance do not move theta.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np

from .errors import (
    BadK,
    BadKind,
    ConfigError,
    DataError,
    DegenerateTreatment,
    LengthMismatch,
    MissingInput,
)
from .learners import (
    HyperParams,
    gbt_fit,
    kfold_split,
    ols_fit,
    predict,
    train_test_folds,
)
from .panel_data import PanelTable
from .preprocess import unit_train_means

Z_975 = 1.959964  # two-sided 5% normal quantile used for all intervals

SCORES = ("orthogonal", "residual_ols")
MODES = ("crossfit", "nosplit_debug")
FOLD_MODES = ("row", "unit")
LEARNER_KINDS = ("linear", "boosted")


@dataclass
class LearnerSpec:
    """Which learner fits both nuisance tasks."""

    kind: str = "linear"  # "linear" | "boosted"
    params: HyperParams | None = None  # boosted only
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in LEARNER_KINDS:
            raise BadKind(f"learner kind must be one of {LEARNER_KINDS}, got {self.kind!r}")


@dataclass
class PlrProblem:
    """One partially linear regression problem, optionally panel-aware."""

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    unit_ids: list | None = None

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        n = self.y.size
        if self.d.size != n or self.x.shape[0] != n:
            raise LengthMismatch("y, d, and x must have the same number of rows")
        if self.x.ndim != 2:
            raise DataError("x must be 2-dimensional")
        if self.unit_ids is not None and len(self.unit_ids) != n:
            raise LengthMismatch("unit_ids must match the number of rows")
        if n and np.ptp(self.d) == 0.0:
            raise DegenerateTreatment("treatment is constant across rows")

    @property
    def n_obs(self) -> int:
        return int(self.y.size)


def problem_from_panel(panel: PanelTable) -> PlrProblem:
    return PlrProblem(panel.y, panel.d, panel.x, list(panel.unit_ids))


@dataclass
class NuisanceResiduals:
    """Out-of-fold nuisance residuals u = y - g_hat and v = d - m_hat."""

    u: np.ndarray
    v: np.ndarray
    fold_of: np.ndarray
    r2_y: float
    r2_d: float
    g_hat: np.ndarray
    m_hat: np.ndarray


@dataclass
class DmlResult:
    theta: float
    se: float
    t: float
    p: float
    ci_low: float
    ci_high: float
    n: int
    per_1pct: float
    # provenance flags beyond the core inference row
    learner: str = ""
    score: str = "orthogonal"
    mode: str = "crossfit"
    fold_mode: str = "row"
    n_folds: int = 2


def unit_blocked_split(unit_ids, k: int, seed: int = 0) -> list[np.ndarray]:
    """K folds that never split a unit: each fold is all rows of a unit block.

    Units are shuffled with the seeded generator and divided into k blocks.
    """
    unit_ids = np.asarray(unit_ids)
    uniq = np.unique(unit_ids)
    if k < 2 or k > uniq.size:
        raise BadK(f"k must satisfy 2 <= k <= number of units ({uniq.size}), got {k}")
    rng = np.random.default_rng(seed)
    blocks = np.array_split(rng.permutation(uniq), k)
    return [np.flatnonzero(np.isin(unit_ids, block)) for block in blocks]


def _fit_predict(kind, params, seed, X_tr, y_tr, X_te) -> np.ndarray:
    if kind == "linear":
        return predict(ols_fit(X_tr, y_tr), X_te)
    return predict(gbt_fit(X_tr, y_tr, params, seed=seed), X_te)


def encode_features(problem: PlrProblem, train_mask: np.ndarray,
                    x_means: bool = False, y_mean: bool = True) -> np.ndarray:
    """x augmented with per-unit training-mean columns (fixed-effect proxies).

    `y_mean` appends the unit mean of the outcome (target encoding of the
    unit id). `x_means` additionally appends one mean column per regressor;
    note that with common-across-unit regressors those columns carry at most
    one value per unit, so OLS needs more units than mean columns. Means use
    train_mask rows only. With both toggles off, returns x unchanged.
    """
    cols = []
    if x_means:
        cols.append(problem.x)
    if y_mean:
        cols.append(problem.y[:, None])
    if not cols:
        return problem.x
    means = unit_train_means(problem.unit_ids, np.hstack(cols), train_mask)
    return np.hstack([problem.x, means])


def _oof_r2(target: np.ndarray, resid: np.ndarray) -> float:
    centered = target - target.mean()
    tss = float(centered @ centered)
    return 1.0 - float(resid @ resid) / tss if tss > 0 else float("nan")


def cross_fit_nuisance(
    problem: PlrProblem,
    learner: LearnerSpec,
    k: int = 2,
    seed: int = 0,
    fold_mode: str = "row",
    unit_means: bool = False,
    outcome_mean: bool = True,
) -> NuisanceResiduals:
    """Fit both nuisances with K-fold cross-fitting.

    Every row is predicted by models trained on the complement of its fold.
    For problems with unit ids the feature matrix is re-encoded inside each
    training complement (`unit_means` appends regressor means, `outcome_mean`
    the unit's y mean), so held-out rows never leak into the means they
    receive. `fold_mode="unit"` keeps all rows of a unit in the same fold.
    The stored r2_y/r2_d are computed on the pooled out-of-fold predictions.
    """
    learner.validate()
    if fold_mode not in FOLD_MODES:
        raise ConfigError(f"fold_mode must be one of {FOLD_MODES}, got {fold_mode!r}")
    if (fold_mode == "unit" or unit_means) and problem.unit_ids is None:
        raise MissingInput("problem has no unit_ids")
    encode = problem.unit_ids is not None and (unit_means or outcome_mean)
    n = problem.n_obs
    if fold_mode == "unit":
        folds = unit_blocked_split(problem.unit_ids, k, seed)
    else:
        folds = kfold_split(n, k, seed)

    g_hat = np.full(n, np.nan)
    m_hat = np.full(n, np.nan)
    fold_of = np.full(n, -1, dtype=np.int64)
    for i, (train, test) in enumerate(train_test_folds(folds)):
        if encode:
            mask = np.zeros(n, dtype=bool)
            mask[train] = True
            X = encode_features(problem, mask, unit_means, outcome_mean)
        else:
            X = problem.x
        for task, target, out in (("y", problem.y, g_hat), ("d", problem.d, m_hat)):
            try:
                out[test] = _fit_predict(
                    learner.kind, learner.params, learner.seed,
                    X[train], target[train], X[test],
                )
            except Exception as exc:
                raise type(exc)(f"fold {i}, {task}-task: {exc}") from exc
        fold_of[test] = i
    u = problem.y - g_hat
    v = problem.d - m_hat
    return NuisanceResiduals(
        u, v, fold_of, _oof_r2(problem.y, u), _oof_r2(problem.d, v), g_hat, m_hat
    )


def fit_nuisance_nosplit(
    problem: PlrProblem,
    learner: LearnerSpec,
    unit_means: bool = False,
    outcome_mean: bool = True,
) -> NuisanceResiduals:
    """Debug mode: nuisances fit and evaluated on the full sample.

    With linear nuisances the orthogonal score then reproduces the
    full-regression treatment coefficient (the partialling-out identity),
    which pins down the score algebra in tests. Not valid for inference with
    flexible learners; callers must flag the output as non-inferential.
    """
    learner.validate()
    if unit_means and problem.unit_ids is None:
        raise MissingInput("problem has no unit_ids")
    n = problem.n_obs
    encode = problem.unit_ids is not None and (unit_means or outcome_mean)
    X = (
        encode_features(problem, np.ones(n, dtype=bool), unit_means, outcome_mean)
        if encode
        else problem.x
    )
    g_hat = _fit_predict(learner.kind, learner.params, learner.seed, X, problem.y, X)
    m_hat = _fit_predict(learner.kind, learner.params, learner.seed, X, problem.d, X)
    u = problem.y - g_hat
    v = problem.d - m_hat
    return NuisanceResiduals(
        u, v, np.zeros(n, dtype=np.int64),
        _oof_r2(problem.y, u), _oof_r2(problem.d, v), g_hat, m_hat,
    )


def wald_inference(theta: float, se: float) -> tuple[float, float, float, float]:
    """(t, p, ci_low, ci_high) under the normal approximation.

    t is exactly theta/se; p = 2 * (1 - Phi(|t|)) via erfc; the interval uses
    the fixed quantile 1.959964.
    """
    if se <= 0 or not math.isfinite(se):
        raise DegenerateTreatment(f"standard error must be positive, got {se}")
    t = theta / se
    p = math.erfc(abs(t) / math.sqrt(2.0))
    return t, p, theta - Z_975 * se, theta + Z_975 * se


def _per_1pct(theta: float) -> float:
    # decimal shift so the printed value matches hand-division of the printed
    # theta; binary /100 can be one ulp off
    return float(Decimal(repr(float(theta))) / 100)


def plr_estimate(
    res: NuisanceResiduals,
    d,
    y,
    g_hat=None,
    score: str = "orthogonal",
) -> DmlResult:
    """Solve the score on pooled residuals and attach Wald inference.

    orthogonal:    theta = sum(v * (y - g_hat)) / sum(v * d),  J = mean(v d)
    residual_ols:  theta = sum(v * u) / sum(v * v),            J = mean(v v)

    psi_i = (target_i - theta * slope_i) * v_i with the matching target and
    slope; SE = sqrt( mean(psi^2) / (n * J^2) ).
    """
    if score not in SCORES:
        raise ConfigError(f"score must be one of {SCORES}, got {score!r}")
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    v = res.v
    n = v.size
    if d.size != n or y.size != n:
        raise LengthMismatch("d and y must match the residual length")
    if float(v @ v) < 1e-12 * n:
        raise DegenerateTreatment("treatment residuals are numerically zero")
    g = res.g_hat if g_hat is None else np.asarray(g_hat, dtype=float)
    if score == "orthogonal":
        target = y - g
        jac = float(v @ d) / n
        if abs(jac) < 1e-12:
            raise DegenerateTreatment("score Jacobian mean(v*d) is numerically zero")
        theta = float(v @ target) / (n * jac)
        psi = (target - theta * d) * v
    else:
        u = res.u
        jac = float(v @ v) / n
        theta = float(v @ u) / (n * jac)
        psi = (u - theta * v) * v
    se = math.sqrt(float(psi @ psi) / n / (n * jac * jac))
    t, p, lo, hi = wald_inference(theta, se)
    return DmlResult(
        theta=theta, se=se, t=t, p=p, ci_low=lo, ci_high=hi,
        n=n, per_1pct=_per_1pct(theta), score=score,
    )


def rescale_per_1pct(result: DmlResult | float) -> float:
    """Effect of a 1 percentage-point move: theta / 100, decimal-exact."""
    theta = result.theta if isinstance(result, DmlResult) else float(result)
    return _per_1pct(theta)


def run_dml(
    problem: PlrProblem,
    learner: LearnerSpec,
    k: int = 2,
    seed: int = 0,
    mode: str = "crossfit",
    score: str = "orthogonal",
    fold_mode: str = "row",
    unit_means: bool = False,
    outcome_mean: bool = True,
) -> tuple[DmlResult, NuisanceResiduals]:
    """End-to-end estimate: nuisances, residuals, score, Wald inference.

    mode "nosplit_debug" skips cross-fitting (in-sample nuisances) and exists
    only to pin the score algebra against direct OLS; its output is flagged
    by the mode field and must not be read as inference.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "nosplit_debug":
        res = fit_nuisance_nosplit(problem, learner, unit_means, outcome_mean)
        n_folds = 1
    else:
        res = cross_fit_nuisance(problem, learner, k, seed, fold_mode,
                                 unit_means, outcome_mean)
        n_folds = k
    result = plr_estimate(res, problem.d, problem.y, score=score)
    result.learner = learner.kind
    result.mode = mode
    result.fold_mode = fold_mode
    result.n_folds = n_folds
    return result, res


def residual_diagnostics(
    res: NuisanceResiduals, fitted
) -> tuple[np.ndarray, dict[str, float]]:
    """Scatter data (fitted, residual) plus summary statistics.

    The residual is the out-of-fold outcome residual u. Summary reports the
    largest |residual| and the fraction within one standard deviation of
    zero (= 0.683 for Gaussian residuals).
    """
    fitted = np.asarray(fitted, dtype=float)
    if fitted.size != res.u.size:
        raise LengthMismatch("fitted length must match the residual length")
    table = np.column_stack([fitted, res.u])
    sd = float(res.u.std())
    frac = float(np.mean(np.abs(res.u) <= sd)) if sd > 0 else 1.0
    summary = {"max_abs": float(np.max(np.abs(res.u))) if res.u.size else 0.0,
               "frac_within_1sd": frac}
    return table, summary


RESULT_CSV_HEADER = ("model", "coef", "se", "t", "p", "ci_low", "ci_high", "n", "per_1pct")


def result_csv_row(model_name: str, result: DmlResult) -> list[str]:
    return [
        model_name,
        repr(result.theta),
        repr(result.se),
        repr(result.t),
        repr(result.p),
        repr(result.ci_low),
        repr(result.ci_high),
        str(result.n),
        repr(result.per_1pct),
    ]


def write_results_csv(rows: list[tuple[str, DmlResult]], path) -> None:
    """Inference table, one row per fitted model."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_CSV_HEADER)
        for model_name, result in rows:
            writer.writerow(result_csv_row(model_name, result))


def write_residuals_csv(res: NuisanceResiduals, path) -> None:
    """One row per observation: fold id and both nuisance residuals."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "fold", "u", "v"])
        for i in range(res.u.size):
            writer.writerow(
                [str(i), str(int(res.fold_of[i])), repr(float(res.u[i])),
                 repr(float(res.v[i]))]
            )
