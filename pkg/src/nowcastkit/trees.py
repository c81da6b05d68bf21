"""Tree-ensemble regressions for bridge equations.

All trees are grown from scratch with greedy variance-reduction splits
(leaf prediction = mean of the training targets in the leaf).  The random
forest draws a bootstrap sample per tree and a fresh feature subset of size
``mtry`` at every node; the forest prediction is the plain average over
trees.  Gradient boosting starts from the target mean and repeatedly fits a
shallow tree to the current residuals (the negative gradient of squared
loss), adding ``learning_rate`` times each tree's leaf means; there is no
row subsampling, so a boosting fit is fully deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import tree as _kt
from .series import DataError

UNLIMITED_DEPTH = 2**31


def _check_xy(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be 2-D")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DataError(f"y length {y.shape} does not match X rows {X.shape}")
    if X.shape[0] == 0:
        raise DataError("need at least one training row")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise DataError("training data must be finite (impute before fitting)")
    return X, y


@dataclass(frozen=True)
class RegressionTree:
    """Array-encoded binary tree; feature[node] == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected (n, {self.n_features}) inputs, got {X.shape}")
        return _kt.tree_predict(self.feature, self.threshold, self.left, self.right, self.value, X)


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None = None,
    min_leaf: int = 1,
    mtry: int | None = None,
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """Grow a single CART regression tree.

    ``mtry`` enables per-node feature subsampling (requires ``rng``); ties in
    split gain go to the lowest feature index, then the lowest threshold.
    Fewer than ``2 * min_leaf`` rows (or constant targets) yield a single
    leaf equal to mean(y).
    """
    X, y = _check_xy(X, y)
    n, nf = X.shape
    if min_leaf < 1:
        raise DataError("min_leaf must be >= 1")
    depth = UNLIMITED_DEPTH if max_depth is None else int(max_depth)
    m = nf if mtry is None else int(mtry)
    if not 1 <= m <= nf:
        raise DataError(f"mtry must be in 1..{nf}")
    if m < nf:
        if rng is None:
            raise DataError("feature subsampling needs an rng")
        pool = rng.random(_kt.pool_size(n, m))
    else:
        pool = np.empty(1)
    rows = np.arange(n, dtype=np.int64)
    feat, thr, left, right, value, k = _kt.grow_tree(X, y, rows, depth, min_leaf, m, pool)
    return RegressionTree(feat[:k].copy(), thr[:k].copy(), left[:k].copy(), right[:k].copy(), value[:k].copy(), nf)


# ---------------------------------------------------------------------------
# random forest


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    n_features: int
    mtry: int
    bootstrap: bool

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected (n, {self.n_features}) inputs, got {X.shape}")
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)


def fit_rf(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 500,
    mtry: int | None = None,
    min_leaf: int = 5,
    max_depth: int | None = None,
    seed: int = 0,
    bootstrap: bool = True,
) -> ForestModel:
    """Bootstrap-aggregated trees with per-node feature subsampling.

    Default ``mtry`` is ceil(n_features / 3).  ``bootstrap=False`` is a test
    hook that trains every tree on the full sample.
    """
    X, y = _check_xy(X, y)
    n, nf = X.shape
    if n_trees < 1:
        raise DataError("n_trees must be >= 1")
    m = math.ceil(nf / 3) if mtry is None else int(mtry)
    if not 1 <= m <= nf:
        raise DataError(f"mtry must be in 1..{nf}")
    depth = UNLIMITED_DEPTH if max_depth is None else int(max_depth)
    rng = np.random.default_rng(seed)
    trees = []
    all_rows = np.arange(n, dtype=np.int64)
    psize = _kt.pool_size(n, m)
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n).astype(np.int64) if bootstrap else all_rows
        pool = rng.random(psize) if m < nf else np.empty(1)
        feat, thr, left, right, value, k = _kt.grow_tree(X, y, rows, depth, min_leaf, m, pool)
        trees.append(
            RegressionTree(feat[:k].copy(), thr[:k].copy(), left[:k].copy(), right[:k].copy(), value[:k].copy(), nf)
        )
    return ForestModel(tuple(trees), nf, m, bootstrap)


def predict_rf(model: ForestModel, x_new: np.ndarray) -> float | np.ndarray:
    """Average tree prediction; accepts one feature vector or a matrix."""
    x = np.asarray(x_new, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != model.n_features:
            raise DataError(f"expected {model.n_features} features, got {x.shape[0]}")
        return float(model.predict(x[None, :])[0])
    return model.predict(x)


# ---------------------------------------------------------------------------
# gradient boosting


@dataclass(frozen=True)
class BoostModel:
    init_value: float
    trees: tuple[RegressionTree, ...]
    learning_rate: float
    n_features: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected (n, {self.n_features}) inputs, got {X.shape}")
        out = np.full(X.shape[0], self.init_value)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def staged_predict(self, X: np.ndarray):
        """Yield predictions after 0, 1, ..., M rounds."""
        X = np.ascontiguousarray(X, dtype=float)
        out = np.full(X.shape[0], self.init_value)
        yield out.copy()
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
            yield out.copy()


def fit_gbm(
    X: np.ndarray,
    y: np.ndarray,
    n_rounds: int = 100,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    min_leaf: int = 5,
) -> BoostModel:
    """Boosted shallow trees under squared loss.

    Starts at mean(y); each round fits a depth-limited tree to the current
    residuals and adds ``learning_rate`` times its leaf means.
    """
    X, y = _check_xy(X, y)
    if n_rounds < 1:
        raise DataError("n_rounds must be >= 1")
    if not 0 < learning_rate <= 1:
        raise DataError("learning_rate must be in (0, 1]")
    init = float(np.mean(y))
    fitted = np.full(y.shape[0], init)
    trees = []
    for _ in range(n_rounds):
        resid = y - fitted
        t = fit_tree(X, resid, max_depth=max_depth, min_leaf=min_leaf)
        fitted += learning_rate * t.predict(X)
        trees.append(t)
    return BoostModel(init, tuple(trees), learning_rate, X.shape[1])


def predict_gbm(model: BoostModel, x_new: np.ndarray) -> float | np.ndarray:
    x = np.asarray(x_new, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != model.n_features:
            raise DataError(f"expected {model.n_features} features, got {x.shape[0]}")
        return float(model.predict(x[None, :])[0])
    return model.predict(x)
