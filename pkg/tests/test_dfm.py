from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from nowcastkit import dfm, synth
from nowcastkit.series import DataError, quarter_index, vintage_at
from oracles import dense_gaussian_reference, random_state_system, simulate_state_system


@pytest.mark.parametrize("seed", range(6))
def test_filter_loglik_matches_dense_gaussian(seed):
    rng = np.random.default_rng(seed)
    ssm = random_state_system(rng)
    T = int(rng.integers(3, 9))
    _, Y = simulate_state_system(ssm, T, rng)
    ll_ref, _, _ = dense_gaussian_reference(ssm, Y)
    filt = dfm.kalman_filter(ssm, Y)
    assert filt.loglik == pytest.approx(ll_ref, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_smoother_moments_match_dense_gaussian(seed):
    rng = np.random.default_rng(100 + seed)
    ssm = random_state_system(rng)
    T = int(rng.integers(3, 9))
    _, Y = simulate_state_system(ssm, T, rng)
    _, means_ref, covs_ref = dense_gaussian_reference(ssm, Y)
    sm = dfm.kalman_smoother(ssm, Y)
    np.testing.assert_allclose(sm.mean, means_ref, atol=1e-9)
    np.testing.assert_allclose(sm.cov, covs_ref, atol=1e-9)


def test_all_missing_rows_contribute_nothing():
    rng = np.random.default_rng(5)
    ssm = random_state_system(rng, s_dim=3, n_obs=2)
    _, Y = simulate_state_system(ssm, 6, rng, miss_prob=0.0)
    padded = np.vstack([Y, np.full((2, 2), np.nan)])
    assert dfm.kalman_filter(ssm, padded).loglik == pytest.approx(
        dfm.kalman_filter(ssm, Y).loglik, abs=1e-12
    )
    sm = dfm.kalman_smoother(ssm, padded)
    assert np.isfinite(sm.mean).all()


def test_filter_shape_validation():
    rng = np.random.default_rng(6)
    ssm = random_state_system(rng, s_dim=2, n_obs=3)
    with pytest.raises(DataError, match="Y must be"):
        dfm.kalman_filter(ssm, np.zeros((4, 2)))


def test_stationary_cov_matches_fixed_point_iteration():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(4, 4))
    A *= 0.6 / np.max(np.abs(np.linalg.eigvals(A)))
    L = rng.normal(size=(4, 4))
    Q = L @ L.T + 0.1 * np.eye(4)
    P = dfm.stationary_cov(A, Q)
    it = np.zeros((4, 4))
    for _ in range(2000):
        it = A @ it @ A.T + Q
    np.testing.assert_allclose(P, it, atol=1e-10)
    np.testing.assert_allclose(P, A @ P @ A.T + Q, atol=1e-10)


def test_stationary_cov_rejects_unit_root():
    with pytest.raises(DataError, match="non-stationary"):
        dfm.stationary_cov(np.eye(2), np.eye(2))


# ---------------------------------------------------------------------------
# state-space assembly


def small_params(r=2, lag=1, n=3, seed=0):
    rng = np.random.default_rng(seed)
    coef = rng.normal(scale=0.2, size=(lag, r, r))
    L = rng.normal(size=(r, r))
    s = 3 * r + n + 1
    return dfm.DFMParams(
        r=r,
        lag=lag,
        loadings=rng.normal(size=(n, r)),
        loading_q=rng.normal(size=r),
        factor_coef=coef,
        factor_cov=L @ L.T + 0.1 * np.eye(r),
        idio_ar=rng.uniform(-0.5, 0.5, size=n),
        idio_var=rng.uniform(0.1, 1.0, size=n),
        idio_ar_q=0.3,
        idio_var_q=0.4,
        init_mean=np.zeros(s),
        init_cov=np.eye(s),
    )


def test_state_space_block_structure():
    p = small_params()
    r, n, s = p.r, p.n_series, p.state_dim
    ssm = dfm.build_state_space(p)
    A, Q, H, R = ssm.transition, ssm.innov_cov, ssm.loadings, ssm.obs_cov
    assert A.shape == (s, s) and H.shape == (n + 1, s)
    np.testing.assert_array_equal(A[0:r, 0:r], p.factor_coef[0])
    np.testing.assert_array_equal(A[r : 2 * r, 0:r], np.eye(r))
    np.testing.assert_array_equal(A[2 * r : 3 * r, r : 2 * r], np.eye(r))
    np.testing.assert_array_equal(np.diag(A)[3 * r : 3 * r + n], p.idio_ar)
    assert A[s - 1, s - 1] == p.idio_ar_q
    np.testing.assert_array_equal(Q[0:r, 0:r], p.factor_cov)
    np.testing.assert_array_equal(np.diag(Q)[3 * r : 3 * r + n], p.idio_var)
    assert Q[s - 1, s - 1] == p.idio_var_q
    # monthly rows: factor loadings plus a unit on the own idiosyncratic state
    np.testing.assert_array_equal(H[:n, 0:r], p.loadings)
    np.testing.assert_array_equal(H[:n, 3 * r : 3 * r + n], np.eye(n))
    # target row repeats the quarterly loading across the three stacked lags
    for block in range(3):
        np.testing.assert_array_equal(H[n, block * r : (block + 1) * r], p.loading_q)
    assert H[n, s - 1] == 1.0
    np.testing.assert_array_equal(R, dfm.JITTER * np.eye(n + 1))


def test_stacked_lags_track_factor_history():
    # with deterministic dynamics the second/third blocks must equal the
    # factor one/two steps back
    p = small_params(r=1, n=2, seed=3)
    ssm = dfm.build_state_space(p)
    s = p.state_dim
    x = np.zeros(s)
    x[0] = 1.0
    hist = [x[0]]
    for _ in range(4):
        x = ssm.transition @ x
        hist.append(x[0])
    # after 4 steps: block 2 = f_{t-1}, block 3 = f_{t-2}
    assert x[1] == pytest.approx(hist[-2])
    assert x[2] == pytest.approx(hist[-3])


def test_stabilize_shrinks_explosive_var():
    coef = np.array([[[1.4]]])
    out = dfm._stabilize_factor_coef(coef)
    assert dfm._factor_spectral_radius(out) <= 0.95 + 1e-9
    tame = np.array([[[0.5]]])
    np.testing.assert_array_equal(dfm._stabilize_factor_coef(tame), tame)


# ---------------------------------------------------------------------------
# EM on synthetic panels


def synth_arrays(seed, T=120, n=6, rho=0.8):
    rng = np.random.default_rng(seed)
    f = np.zeros(T)
    for t in range(1, T):
        f[t] = rho * f[t - 1] + rng.normal(scale=0.6)
    lam = rng.uniform(0.5, 1.5, size=n)
    M = f[:, None] * lam + rng.normal(scale=0.5, size=(T, n))
    # ragged tail
    for j in range(n):
        M[T - int(rng.integers(0, 4)) or T :, j] = np.nan
    yq = np.full(T, np.nan)
    for row in range(2, T - 3, 3):
        yq[row] = (f[row] + f[row - 1] + f[row - 2]) / 3 + rng.normal(scale=0.2)
    return f, M, yq


@pytest.mark.parametrize("seed", range(4))
def test_em_loglik_path_is_monotone(seed):
    _, M, yq = synth_arrays(seed)
    _, path, _ = dfm.fit_dfm_arrays(M, yq, max_iter=30, init_rf_trees=0, seed=seed)
    assert len(path) >= 2
    assert (np.diff(path) >= -1e-8).all()


def test_em_convergence_flag():
    _, M, yq = synth_arrays(11)
    _, path, converged = dfm.fit_dfm_arrays(M, yq, max_iter=200, tol=1e-6, init_rf_trees=0)
    assert converged
    assert len(path) <= 200


def test_factor_recovery_one_factor_dgp():
    f, M, yq = synth_arrays(21, T=300, n=10)
    params, _, _ = dfm.fit_dfm_arrays(M, yq, max_iter=60, init_rf_trees=0, seed=1)
    Y = np.column_stack([M, yq])
    sm = dfm.kalman_smoother(dfm.build_state_space(params), Y)
    fhat = sm.mean[:, 0]
    corr = np.corrcoef(fhat, f)[0, 1]
    assert abs(corr) >= 0.95


def test_fit_arrays_validation():
    M = np.zeros((20, 3))
    yq = np.full(20, np.nan)
    with pytest.raises(DataError, match="bad shapes"):
        dfm.fit_dfm_arrays(M, yq[:-1])
    with pytest.raises(DataError, match="at least 8"):
        dfm.fit_dfm_arrays(M[:5], yq[:5])
    with pytest.raises(DataError, match="lag"):
        dfm.fit_dfm_arrays(M, yq, lag=4)
    with pytest.raises(DataError, match="factor count"):
        dfm.fit_dfm_arrays(M, yq, r=7)


# ---------------------------------------------------------------------------
# panel interface


def test_fit_and_nowcast_on_vintage_panel(economy):
    series, meta = economy.series, economy.meta
    as_of = dt.date(2017, 7, 31)
    panel = vintage_at(series, meta, as_of).panel
    res = dfm.fit_dfm(panel, max_iter=40, init_rf_trees=0, seed=0)
    assert res.n_iter >= 2
    # a released quarter is pinned by its observation row
    released = sorted(panel.target_by_quarter())
    q_rel = released[-1]
    truth = economy.truth["quarterly"][q_rel]
    assert dfm.nowcast_dfm(res, panel, q_rel) == pytest.approx(truth, abs=1e-3)
    # the current quarter's nowcast is finite and in a sane range
    q_now = quarter_index(as_of)
    val = dfm.nowcast_dfm(res, panel, q_now)
    assert np.isfinite(val)
    assert abs(val - economy.truth["quarterly"][q_now]) < 5.0


def test_nowcast_extension_limit(economy):
    panel = vintage_at(economy.series, economy.meta, dt.date(2017, 7, 31)).panel
    q_now = quarter_index(dt.date(2017, 7, 31))
    with pytest.raises(DataError, match="months past the panel"):
        dfm.nowcast_dfm(
            dfm.fit_dfm(panel, max_iter=5, init_rf_trees=0), panel, q_now + 8
        )


def test_nowcast_moves_with_new_information(economy):
    """Adding the quarter's own hard data should change the nowcast."""
    q = quarter_index(dt.date(2017, 4, 1))
    early = vintage_at(economy.series, economy.meta, dt.date(2017, 4, 30)).panel
    late = vintage_at(economy.series, economy.meta, dt.date(2017, 8, 31)).panel
    r_early = dfm.fit_dfm(early, max_iter=40, init_rf_trees=0, seed=0)
    r_late = dfm.fit_dfm(late, max_iter=40, init_rf_trees=0, seed=0)
    v_early = dfm.nowcast_dfm(r_early, early, q)
    v_late = dfm.nowcast_dfm(r_late, late, q)
    assert v_early != v_late
    truth = economy.truth["quarterly"][q]
    assert abs(v_late - truth) <= abs(v_early - truth) + 0.75
