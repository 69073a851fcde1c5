"""Nuisance learners: closed-form OLS and from-scratch gradient-boosted
regression trees, plus k-fold utilities and a small grid search.

Both learners are deterministic given their inputs. Trees use exact greedy
variance-reduction splits with fixed tie-breaking (lowest feature index, then
lowest threshold), so refitting on identical data reproduces the model
bit-for-bit.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadK,
    ConfigError,
    ConstantTarget,
    DimensionMismatch,
    LengthMismatch,
    RankDeficient,
    TooFewRows,
)


@dataclass
class LinearModel:
    intercept: float
    coefficients: np.ndarray  # one weight per feature


@dataclass
class HyperParams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    subsample: float = 1.0

    def validate(self) -> None:
        if self.n_trees < 0:
            raise ConfigError("n_trees must be >= 0")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ConfigError("subsample must be in (0, 1]")


@dataclass
class RegressionTree:
    """Flat-array binary tree. Leaves point to themselves so vectorized
    routing can run a fixed number of steps."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(self.depth):
            go_left = X[np.arange(X.shape[0]), self.feature[node]] <= self.threshold[node]
            node = np.where(go_left, self.left[node], self.right[node])
        return self.value[node]


@dataclass
class GbtModel:
    base_score: float
    learning_rate: float
    params: HyperParams
    trees: list[RegressionTree] = field(default_factory=list)
    n_features: int = 0


def _as_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch("X must be 2-dimensional")
    if y.ndim != 1 or y.size != X.shape[0]:
        raise LengthMismatch(f"y has {y.size} entries for {X.shape[0]} rows of X")
    return X, y


def ols_fit(X, y) -> LinearModel:
    """Least squares with an intercept, solved by QR.

    Raises RankDeficient when the design (with intercept prepended) does not
    have full column rank -- constant features are the usual culprit.
    """
    X, y = _as_xy(X, y)
    n, k = X.shape
    if n <= k + 1:
        raise TooFewRows(f"need more than {k + 1} rows to fit {k} features, got {n}")
    Z = np.column_stack([np.ones(n), X])
    Q, R = np.linalg.qr(Z)
    diag = np.abs(np.diag(R))
    if diag.min() <= max(n, k + 1) * np.finfo(float).eps * max(diag.max(), 1.0):
        raise RankDeficient("design matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y)
    return LinearModel(intercept=float(beta[0]), coefficients=beta[1:])


def _presort(X: np.ndarray, rows: np.ndarray) -> list[np.ndarray]:
    """Row indices sorted per feature (stable, so equal values keep row order).

    Sorting happens once per fitted ensemble; tree growth only partitions
    these arrays, never re-sorts.
    """
    return [rows[np.argsort(X[rows, j], kind="stable")] for j in range(X.shape[1])]


def _best_split(
    X: np.ndarray, y: np.ndarray, orders: list[np.ndarray], min_leaf: int
) -> tuple[int, float] | None:
    """Exact greedy search over all features and midpoint thresholds.

    `orders` holds the node's rows sorted by each feature. Maximizes the
    variance-reduction gain; ties break to the lowest feature index and then
    the lowest threshold (argmax returns the first maximum in each
    direction). Returns None when no split has strictly positive gain with
    both children >= min_leaf.
    """
    n = orders[0].size
    if n < 2 * min_leaf:
        return None
    xs = np.stack([X[o, j] for j, o in enumerate(orders)], axis=1)
    csum = np.cumsum(np.stack([y[o] for o in orders], axis=1), axis=0)
    total = float(y[orders[0]].sum())
    parent_score = total * total / n
    # splitting after sorted position i-1 puts i rows on the left
    counts = np.arange(1, n)[:, None]
    left_sum = csum[:-1]
    right_sum = total - left_sum
    gain = (
        left_sum * left_sum / counts
        + right_sum * right_sum / (n - counts)
        - parent_score
    )
    valid = (counts >= min_leaf) & (n - counts >= min_leaf) & (xs[1:] > xs[:-1])
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    best_pos = np.argmax(gain, axis=0)
    cols = np.arange(len(orders))
    best_gain = gain[best_pos, cols]
    j = int(np.argmax(best_gain))
    if not best_gain[j] > 0.0:
        return None
    i = int(best_pos[j])
    return j, float((xs[i, j] + xs[i + 1, j]) / 2.0)


def _fit_tree(
    X: np.ndarray, y: np.ndarray, orders: list[np.ndarray], max_depth: int, min_leaf: int
) -> RegressionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def grow(node_orders: list[np.ndarray], depth: int) -> int:
        idx = len(feature)
        feature.append(0)
        threshold.append(np.inf)
        left.append(idx)
        right.append(idx)
        value.append(float(y[node_orders[0]].mean()))
        if depth < max_depth:
            split = _best_split(X, y, node_orders, min_leaf)
            if split is not None:
                j, thr = split
                go_left = [X[o, j] <= thr for o in node_orders]
                feature[idx] = j
                threshold[idx] = thr
                left[idx] = grow([o[m] for o, m in zip(node_orders, go_left)], depth + 1)
                right[idx] = grow([o[~m] for o, m in zip(node_orders, go_left)], depth + 1)
        return idx

    grow(orders, 0)
    return RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
        max_depth,
    )


def gbt_fit(X, y, params: HyperParams | None = None, seed: int = 0) -> GbtModel:
    """Stagewise least-squares boosting on raw residuals.

    The model starts at the training mean; each stage fits a depth-limited
    tree to the current residuals and the prediction moves by learning_rate
    times the leaf mean. Leaf values are stored unscaled; the learning rate
    is applied at prediction time. With subsample < 1 each stage fits on a
    seeded row subsample but residuals update on all rows.
    """
    params = params or HyperParams()
    params.validate()
    X, y = _as_xy(X, y)
    n = X.shape[0]
    if n < max(2, 2 * params.min_samples_leaf) and params.n_trees > 0 and params.max_depth > 0:
        raise TooFewRows(
            f"need at least {2 * params.min_samples_leaf} rows to split, got {n}"
        )
    if n < 1:
        raise TooFewRows("need at least 1 row")
    rng = np.random.default_rng(seed)
    model = GbtModel(
        base_score=float(y.mean()),
        learning_rate=params.learning_rate,
        params=replace(params),
        n_features=X.shape[1],
    )
    fitted = np.full(n, model.base_score)
    all_rows = np.arange(n)
    base_orders = _presort(X, all_rows)
    n_sub = max(1, int(params.subsample * n))
    for _ in range(params.n_trees):
        resid = y - fitted
        if n_sub == n:
            orders = base_orders
        else:
            member = np.zeros(n, dtype=bool)
            member[rng.choice(n, size=n_sub, replace=False)] = True
            orders = [o[member[o]] for o in base_orders]
        tree = _fit_tree(X, resid, orders, params.max_depth, params.min_samples_leaf)
        model.trees.append(tree)
        fitted += params.learning_rate * tree.predict(X)
    return model


def predict(model, X) -> np.ndarray:
    """Evaluate a LinearModel or GbtModel on new rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch("X must be 2-dimensional")
    if isinstance(model, LinearModel):
        if X.shape[1] != model.coefficients.size:
            raise DimensionMismatch(
                f"model expects {model.coefficients.size} features, got {X.shape[1]}"
            )
        return X @ model.coefficients + model.intercept
    if isinstance(model, GbtModel):
        if X.shape[1] != model.n_features:
            raise DimensionMismatch(
                f"model expects {model.n_features} features, got {X.shape[1]}"
            )
        out = np.full(X.shape[0], model.base_score)
        for tree in model.trees:
            out += model.learning_rate * tree.predict(X)
        return out
    raise TypeError(f"unsupported model type {type(model).__name__}")


def mse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch("y_true and y_pred must have the same length")
    diff = y_true - y_pred
    return float(diff @ diff / diff.size)


def staged_mse(model: GbtModel, X, y) -> np.ndarray:
    """MSE of the ensemble truncated after 0, 1, ..., n_trees stages.

    With squared-error boosting and learning_rate in (0, 1] each stage can
    only shrink the training loss, so this curve is non-increasing.
    """
    X, y = _as_xy(X, y)
    out = np.empty(len(model.trees) + 1)
    pred = np.full(X.shape[0], model.base_score)
    out[0] = mse(y, pred)
    for i, tree in enumerate(model.trees):
        pred = pred + model.learning_rate * tree.predict(X)
        out[i + 1] = mse(y, pred)
    return out


def r2(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch("y_true and y_pred must have the same length")
    centered = y_true - y_true.mean()
    tss = float(centered @ centered)
    if tss == 0.0:
        raise ConstantTarget("R^2 undefined for a constant target")
    diff = y_true - y_pred
    return 1.0 - float(diff @ diff) / tss


def kfold_split(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle of 0..n-1 partitioned into k folds.

    Fold sizes differ by at most one; the folds are disjoint and their union
    is the full index range. Each fold is returned sorted.
    """
    if k < 2 or k > n:
        raise BadK(f"k must satisfy 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(fold) for fold in np.array_split(perm, k)]


def train_test_folds(folds: list[np.ndarray]) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, test) index pairs: each fold in turn is the test set."""
    pairs = []
    for i, test in enumerate(folds):
        train = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        pairs.append((train, test))
    return pairs


DEFAULT_GRID: list[HyperParams] = [
    HyperParams(n_trees=t, max_depth=d, learning_rate=lr, min_samples_leaf=20)
    for t, d, lr in itertools.product((50, 200), (2, 4), (0.1, 0.3))
]

GRID_JSON_KEYS = ("n_trees", "max_depth", "learning_rate", "min_samples_leaf")


def grid_from_json(text: str) -> list[HyperParams]:
    """Parse a JSON array of hyperparameter objects into a grid."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"grid JSON is malformed: {exc}") from exc
    if not isinstance(doc, list) or not doc:
        raise ConfigError("grid JSON must be a non-empty array of objects")
    grid = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise ConfigError(f"grid entry {i} is not an object")
        unknown = set(entry) - set(GRID_JSON_KEYS) - {"subsample"}
        if unknown:
            raise ConfigError(f"grid entry {i} has unknown keys {sorted(unknown)}")
        params = HyperParams(**entry)
        params.validate()
        grid.append(params)
    return grid


@dataclass
class CvRow:
    """One grid candidate's cross-validated scores."""

    params: HyperParams
    cv_mse: float
    cv_r2: float
    failed: bool = False


def grid_search_cv(
    X,
    y,
    grid: list[HyperParams] | None = None,
    k: int = 2,
    seed: int = 0,
) -> tuple[HyperParams, list[CvRow]]:
    """Pick boosted-tree settings by k-fold out-of-fold MSE.

    A candidate whose fit fails on any fold is marked failed (infinite MSE)
    rather than aborting the search. Ties break by (mse, n_trees, max_depth)
    so the winner is deterministic.
    """
    grid = DEFAULT_GRID if grid is None else grid
    if not grid:
        raise ConfigError("hyperparameter grid is empty")
    X, y = _as_xy(X, y)
    pairs = train_test_folds(kfold_split(X.shape[0], k, seed))
    table: list[CvRow] = []
    for params in grid:
        losses, scores = [], []
        failed = False
        for train, test in pairs:
            try:
                model = gbt_fit(X[train], y[train], params, seed=seed)
                pred = predict(model, X[test])
                losses.append(mse(y[test], pred))
                scores.append(r2(y[test], pred))
            except Exception:
                failed = True
                break
        if failed:
            table.append(CvRow(replace(params), float("inf"), float("-inf"), True))
        else:
            table.append(CvRow(replace(params), float(np.mean(losses)), float(np.mean(scores))))
    best = min(table, key=lambda row: (row.cv_mse, row.params.n_trees, row.params.max_depth))
    return replace(best.params), table


def write_grid_cv_csv(table: list[CvRow], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n_trees", "max_depth", "learning_rate", "min_samples_leaf", "cv_mse", "cv_r2"]
        )
        for row in table:
            writer.writerow(
                [
                    row.params.n_trees,
                    row.params.max_depth,
                    repr(row.params.learning_rate),
                    row.params.min_samples_leaf,
                    repr(row.cv_mse),
                    repr(row.cv_r2),
                ]
            )
