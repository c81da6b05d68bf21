from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nowcastkit import trees
from nowcastkit.series import DataError


def brute_force_split(X, y, min_leaf=1):
    """Enumerate every (feature, midpoint) split and return the best by SSE
    reduction with ties resolved to the lowest feature, then lowest threshold."""
    n, nf = X.shape
    parent_sse = float(np.sum((y - y.mean()) ** 2))
    best = None  # (gain, feature, threshold)
    for j in range(nf):
        xs = np.unique(X[:, j])
        for a, b in zip(xs[:-1], xs[1:]):
            thr = 0.5 * (a + b)
            lm = X[:, j] <= thr
            nl, nr = int(lm.sum()), int((~lm).sum())
            if nl < min_leaf or nr < min_leaf:
                continue
            sse = float(np.sum((y[lm] - y[lm].mean()) ** 2)) + float(
                np.sum((y[~lm] - y[~lm].mean()) ** 2)
            )
            gain = parent_sse - sse
            cand = (gain, j, thr)
            if best is None or gain > best[0] + 1e-12 or (
                abs(gain - best[0]) <= 1e-12
                and (j < best[1] or (j == best[1] and thr < best[2]))
            ):
                best = cand
    return best


@pytest.mark.parametrize("seed", range(8))
def test_root_split_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, nf = 25, 3
    X = rng.normal(size=(n, nf))
    y = 2.0 * X[:, 0] + rng.normal(scale=0.5, size=n)
    t = trees.fit_tree(X, y, max_depth=1)
    gain, j, thr = brute_force_split(X, y)
    assert gain > 0
    assert int(t.feature[0]) == j
    assert t.threshold[0] == pytest.approx(thr, abs=1e-12)
    # leaf values are the side means
    lm = X[:, j] <= thr
    kids = sorted([int(t.left[0]), int(t.right[0])])
    leaf_vals = sorted([float(t.value[k]) for k in kids])
    assert leaf_vals == pytest.approx(sorted([y[lm].mean(), y[~lm].mean()]), abs=1e-12)


def test_tie_breaks_prefer_lowest_feature_then_threshold():
    # identical duplicated feature: gains tie exactly, feature 0 must win
    X0 = np.array([[0.0], [1.0], [2.0], [3.0]])
    X = np.hstack([X0, X0])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    t = trees.fit_tree(X, y, max_depth=1)
    assert int(t.feature[0]) == 0
    # symmetric y: both midpoints around the centre tie; lowest threshold wins
    Xs = np.array([[0.0], [1.0], [2.0], [3.0]])
    ys = np.array([0.0, 1.0, 1.0, 0.0])
    ts = trees.fit_tree(Xs, ys, max_depth=1)
    gain, j, thr = brute_force_split(Xs, ys)
    assert ts.threshold[0] == pytest.approx(thr)


def test_depth_zero_returns_mean_leaf():
    X = np.random.default_rng(0).normal(size=(10, 2))
    y = np.random.default_rng(1).normal(size=10)
    t = trees.fit_tree(X, y, max_depth=0)
    assert t.n_leaves == 1
    np.testing.assert_allclose(t.predict(X), np.full(10, y.mean()), atol=1e-12)


def test_min_leaf_respected():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    t = trees.fit_tree(X, y, min_leaf=7)

    def leaf_sizes(node, rows):
        if t.feature[node] < 0:
            return [len(rows)]
        lm = X[rows, t.feature[node]] <= t.threshold[node]
        return leaf_sizes(int(t.left[node]), rows[lm]) + leaf_sizes(
            int(t.right[node]), rows[~lm]
        )

    assert min(leaf_sizes(0, np.arange(30))) >= 7


def test_fully_grown_tree_interpolates_training_data():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    t = trees.fit_tree(X, y, min_leaf=1)
    np.testing.assert_allclose(t.predict(X), y, atol=1e-12)


def test_constant_target_single_leaf():
    X = np.random.default_rng(4).normal(size=(12, 2))
    y = np.full(12, 3.25)
    t = trees.fit_tree(X, y)
    assert t.n_leaves == 1


def test_validation_errors():
    X = np.random.default_rng(5).normal(size=(10, 2))
    y = np.random.default_rng(6).normal(size=10)
    with pytest.raises(DataError, match="finite"):
        trees.fit_tree(np.where(X > 1, np.nan, X), y)
    with pytest.raises(DataError, match="does not match"):
        trees.fit_tree(X, y[:-1])
    with pytest.raises(DataError, match="min_leaf"):
        trees.fit_tree(X, y, min_leaf=0)
    with pytest.raises(DataError, match="mtry"):
        trees.fit_tree(X, y, mtry=3, rng=np.random.default_rng(0))
    with pytest.raises(DataError, match="rng"):
        trees.fit_tree(X, y, mtry=1)
    with pytest.raises(DataError, match="expected"):
        t = trees.fit_tree(X, y)
        t.predict(np.zeros((3, 5)))


# ---------------------------------------------------------------------------
# random forest


def test_forest_of_one_tree_equals_tree():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(30, 4))
    y = X @ np.array([1.0, -0.5, 0.0, 2.0]) + rng.normal(scale=0.2, size=30)
    rf = trees.fit_rf(X, y, n_trees=1, mtry=4, min_leaf=3, bootstrap=False, seed=0)
    single = trees.fit_tree(X, y, min_leaf=3)
    Xq = rng.normal(size=(15, 4))
    np.testing.assert_array_equal(rf.predict(Xq), single.predict(Xq))


def test_forest_default_mtry_is_third_of_features():
    X = np.random.default_rng(8).normal(size=(20, 7))
    y = np.random.default_rng(9).normal(size=20)
    rf = trees.fit_rf(X, y, n_trees=3)
    assert rf.mtry == 3  # ceil(7 / 3)


def test_forest_deterministic_given_seed():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(25, 3))
    y = rng.normal(size=25)
    Xq = rng.normal(size=(6, 3))
    a = trees.fit_rf(X, y, n_trees=25, seed=11).predict(Xq)
    b = trees.fit_rf(X, y, n_trees=25, seed=11).predict(Xq)
    np.testing.assert_array_equal(a, b)
    c = trees.fit_rf(X, y, n_trees=25, seed=12).predict(Xq)
    assert not np.array_equal(a, c)


def test_forest_beats_mean_on_signal():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(120, 4))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] + rng.normal(scale=0.1, size=120)
    Xq = rng.normal(size=(80, 4))
    yq = np.sin(Xq[:, 0]) + 0.5 * Xq[:, 1]
    rf = trees.fit_rf(X, y, n_trees=80, seed=14)
    err = np.mean((trees.predict_rf(rf, Xq) - yq) ** 2)
    base = np.mean((y.mean() - yq) ** 2)
    assert err < 0.5 * base


def test_predict_rf_scalar_and_matrix_forms():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(20, 3))
    y = rng.normal(size=20)
    rf = trees.fit_rf(X, y, n_trees=5, seed=0)
    v = trees.predict_rf(rf, X[0])
    assert isinstance(v, float)
    assert v == trees.predict_rf(rf, X[:1])[0]
    with pytest.raises(DataError):
        trees.predict_rf(rf, np.zeros(5))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_forest_predictions_within_training_range(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(8, 40)
    nf = rng.integers(1, 5)
    X = rng.normal(size=(n, nf))
    y = rng.normal(size=n)
    rf = trees.fit_rf(X, y, n_trees=10, min_leaf=2, seed=seed)
    Xq = rng.normal(scale=3.0, size=(20, nf))
    pred = rf.predict(Xq)
    assert pred.min() >= y.min() - 1e-12
    assert pred.max() <= y.max() + 1e-12


# ---------------------------------------------------------------------------
# gradient boosting


def test_gbm_training_loss_decreases_every_round():
    rng = np.random.default_rng(16)
    X = rng.normal(size=(60, 3))
    y = X[:, 0] ** 2 + rng.normal(scale=0.3, size=60)
    gb = trees.fit_gbm(X, y, n_rounds=40, learning_rate=0.1)
    losses = [float(np.mean((y - p) ** 2)) for p in gb.staged_predict(X)]
    assert len(losses) == 41
    diffs = np.diff(losses)
    assert (diffs <= 1e-12).all()
    assert losses[-1] < losses[0]


def test_gbm_stage_zero_is_target_mean():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(25, 2))
    y = rng.normal(size=25)
    gb = trees.fit_gbm(X, y, n_rounds=3)
    first = next(iter(gb.staged_predict(X)))
    np.testing.assert_allclose(first, np.full(25, y.mean()))


def test_gbm_deterministic():
    rng = np.random.default_rng(18)
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    a = trees.fit_gbm(X, y).predict(X)
    b = trees.fit_gbm(X, y).predict(X)
    np.testing.assert_array_equal(a, b)


def test_gbm_validation():
    X = np.zeros((5, 1))
    y = np.zeros(5)
    with pytest.raises(DataError, match="n_rounds"):
        trees.fit_gbm(X, y, n_rounds=0)
    with pytest.raises(DataError, match="learning_rate"):
        trees.fit_gbm(X, y, learning_rate=0.0)
    with pytest.raises(DataError, match="learning_rate"):
        trees.fit_gbm(X, y, learning_rate=1.5)


def test_predict_gbm_scalar_form():
    rng = np.random.default_rng(19)
    X = rng.normal(size=(20, 2))
    y = rng.normal(size=20)
    gb = trees.fit_gbm(X, y, n_rounds=5)
    assert trees.predict_gbm(gb, X[3]) == pytest.approx(gb.predict(X)[3])
