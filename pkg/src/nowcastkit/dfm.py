"""Dynamic factor model on a ragged monthly panel with a quarterly target.

Model
-----
Indicators load a small set of monthly factors with AR(1) idiosyncratic
errors; factors follow a VAR (lag 1 by default, up to 3).  The quarterly
target is a partially observed monthly row assigned to the third month of
its quarter, loading the stacked factors [f_t, f_{t-1}, f_{t-2}] with one
repeated loading vector, plus its own AR(1) idiosyncratic state.

State vector (dim 3r + n + 1):

    [ f_t | f_{t-1} | f_{t-2} | eps_1 .. eps_n | eps_target ]

Observation noise is carried by the idiosyncratic states; measurement rows
only add a tiny jitter (1e-8) for numerical positive-definiteness, so an
observed target value pins the smoothed state to it.

Estimation is EM: the E-step runs the missing-data Kalman filter/smoother,
the M-step updates loadings, factor VAR, idiosyncratic AR(1) blocks, and the
initial state moments in closed form from smoothed moments, so the
log-likelihood path is non-decreasing (a decrease beyond 1e-8 raises, as it
indicates a bug).  Initialization: principal components on a balanced copy
of the panel, AR/VAR regressions on the implied residuals, and the
stationary state covariance.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import impute
from ._kernels import kalman as _kk
from .series import DataError, PanelDataset, quarter_end_month

JITTER = 1e-8


# ---------------------------------------------------------------------------
# generic state-space wrappers


@dataclass(frozen=True)
class StateSpace:
    """Time-invariant linear-Gaussian system (see kernels for the equations)."""

    transition: np.ndarray  # (s, s)
    innov_cov: np.ndarray  # (s, s)
    loadings: np.ndarray  # (n, s)
    obs_cov: np.ndarray  # (n, n)
    init_mean: np.ndarray  # (s,)
    init_cov: np.ndarray  # (s, s)


@dataclass(frozen=True)
class FilterResult:
    loglik: float
    mean_pred: np.ndarray
    cov_pred: np.ndarray
    mean_filt: np.ndarray
    cov_filt: np.ndarray


@dataclass(frozen=True)
class SmootherResult:
    loglik: float
    mean: np.ndarray  # (T, s) smoothed means
    cov: np.ndarray  # (T, s, s)
    cov_lag: np.ndarray  # (T-1, s, s), Cov(s_{t+1}, s_t | all data)
    filtered: FilterResult


def _zeros_cd(T: int, s: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros((T, s)), np.zeros((T, n))


def kalman_filter(ssm: StateSpace, Y: np.ndarray) -> FilterResult:
    """Missing-data Kalman filter; NaN entries of Y are skipped row-wise."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != ssm.loadings.shape[0]:
        raise DataError(f"Y must be (T, {ssm.loadings.shape[0]}), got {Y.shape}")
    c, d = _zeros_cd(Y.shape[0], ssm.transition.shape[0], Y.shape[1])
    ll, mp, Pp, mf, Pf = _kk.kalman_filter(
        Y, ssm.transition, ssm.innov_cov, ssm.loadings, ssm.obs_cov, c, d, ssm.init_mean, ssm.init_cov
    )
    return FilterResult(float(ll), mp, Pp, mf, Pf)


def kalman_smoother(ssm: StateSpace, Y: np.ndarray) -> SmootherResult:
    """Filter plus RTS backward pass with lag-one covariances."""
    filt = kalman_filter(ssm, Y)
    m_sm, P_sm, P_lag = _kk.rts_smooth(
        ssm.transition, filt.mean_pred, filt.cov_pred, filt.mean_filt, filt.cov_filt
    )
    return SmootherResult(filt.loglik, m_sm, P_sm, P_lag, filt)


def stationary_cov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve P = A P A' + Q for the unconditional state covariance."""
    s = A.shape[0]
    eig = np.max(np.abs(np.linalg.eigvals(A)))
    if eig >= 1.0:
        raise DataError(f"transition is non-stationary (spectral radius {eig:.3f})")
    vec = np.linalg.solve(np.eye(s * s) - np.kron(A, A), Q.reshape(-1))
    P = vec.reshape(s, s)
    return 0.5 * (P + P.T)


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class DFMParams:
    r: int
    lag: int
    loadings: np.ndarray  # (n, r)
    loading_q: np.ndarray  # (r,)
    factor_coef: np.ndarray  # (lag, r, r)
    factor_cov: np.ndarray  # (r, r)
    idio_ar: np.ndarray  # (n,)
    idio_var: np.ndarray  # (n,)
    idio_ar_q: float
    idio_var_q: float
    init_mean: np.ndarray  # (3r + n + 1,)
    init_cov: np.ndarray
    jitter: float = JITTER

    @property
    def n_series(self) -> int:
        return self.loadings.shape[0]

    @property
    def state_dim(self) -> int:
        return 3 * self.r + self.n_series + 1


def build_state_space(params: DFMParams) -> StateSpace:
    """Assemble (A, Q, H, R) with the stacked-factor / idiosyncratic layout."""
    r, lag, n = params.r, params.lag, params.n_series
    s = params.state_dim
    A = np.zeros((s, s))
    for l in range(1, lag + 1):
        A[0:r, (l - 1) * r : l * r] = params.factor_coef[l - 1]
    A[r : 2 * r, 0:r] = np.eye(r)
    A[2 * r : 3 * r, r : 2 * r] = np.eye(r)
    for i in range(n):
        A[3 * r + i, 3 * r + i] = params.idio_ar[i]
    A[s - 1, s - 1] = params.idio_ar_q

    Q = np.zeros((s, s))
    Q[0:r, 0:r] = params.factor_cov
    for i in range(n):
        Q[3 * r + i, 3 * r + i] = params.idio_var[i]
    Q[s - 1, s - 1] = params.idio_var_q

    H = np.zeros((n + 1, s))
    H[:n, 0:r] = params.loadings
    for i in range(n):
        H[i, 3 * r + i] = 1.0
    H[n, 0:r] = params.loading_q
    H[n, r : 2 * r] = params.loading_q
    H[n, 2 * r : 3 * r] = params.loading_q
    H[n, s - 1] = 1.0

    R = params.jitter * np.eye(n + 1)
    return StateSpace(A, Q, H, R, params.init_mean, params.init_cov)


def _factor_spectral_radius(coef: np.ndarray) -> float:
    lag, r, _ = coef.shape
    comp = np.zeros((lag * r, lag * r))
    for l in range(lag):
        comp[0:r, l * r : (l + 1) * r] = coef[l]
    if lag > 1:
        comp[r:, : (lag - 1) * r] = np.eye((lag - 1) * r)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _stabilize_factor_coef(coef: np.ndarray, bound: float = 0.95) -> np.ndarray:
    """Shrink VAR coefficients so the companion spectral radius is <= bound."""
    rho = _factor_spectral_radius(coef)
    if rho < 0.99:
        return coef
    scale = bound / rho
    out = coef.copy()
    for l in range(coef.shape[0]):
        out[l] *= scale ** (l + 1)
    return out


def _pd_floor(M: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    return (V * np.clip(w, floor, None)) @ V.T


# ---------------------------------------------------------------------------
# initialization


def _balanced_for_init(M: np.ndarray, rf_trees: int, seed: int) -> np.ndarray:
    try:
        return impute.balance_matrix(M, rf_options={"n_trees": rf_trees}, seed=seed)
    except DataError:
        # short or oddly gapped panels: fall back to column-mean fill
        B = M.copy()
        for j in range(B.shape[1]):
            col = B[:, j]
            bad = np.isnan(col)
            if bad.all():
                raise DataError(f"column {j} has no observations")
            col[bad] = col[~bad].mean()
        return B


def _ar1_moments(e: np.ndarray) -> tuple[float, float]:
    if e.shape[0] < 3:
        return 0.0, max(float(np.var(e)) if e.size else 1.0, 1e-6)
    num = float(e[1:] @ e[:-1])
    den = float(e[:-1] @ e[:-1])
    a = 0.0 if den <= 0 else np.clip(num / den, -0.98, 0.98)
    resid = e[1:] - a * e[:-1]
    return float(a), max(float(np.var(resid)), 1e-6)


def _init_params(
    M: np.ndarray, yq: np.ndarray, r: int, lag: int, jitter: float, rf_trees: int, seed: int
) -> DFMParams:
    T, n = M.shape
    B = _balanced_for_init(M, rf_trees, seed)
    cov = (B.T @ B) / T
    w, V = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1][:r]
    F = B @ V[:, order]  # (T, r)

    FtF = F.T @ F
    lam = np.linalg.solve(FtF + 1e-8 * np.eye(r), F.T @ B).T  # (n, r)
    resid = B - F @ lam.T
    idio_ar = np.empty(n)
    idio_var = np.empty(n)
    for i in range(n):
        idio_ar[i], idio_var[i] = _ar1_moments(resid[:, i])

    # factor VAR(lag)
    Xl = np.column_stack([F[lag - l - 1 : T - l - 1] for l in range(lag)])  # rows t = lag..T-1
    Yl = F[lag:]
    C = np.linalg.solve(Xl.T @ Xl + 1e-8 * np.eye(lag * r), Xl.T @ Yl).T  # (r, lag*r)
    coef = np.stack([C[:, l * r : (l + 1) * r] for l in range(lag)])
    coef = _stabilize_factor_coef(coef)
    eta = Yl - Xl @ C.T
    fcov = _pd_floor(eta.T @ eta / max(Yl.shape[0], 1), 1e-6)

    # quarterly loading on the three-month factor sum
    g = F.copy()
    g[2:] = F[2:] + F[1:-1] + F[:-2]
    rows = np.nonzero(~np.isnan(yq))[0]
    rows = rows[rows >= 2]
    if rows.size >= r + 2:
        Gm = g[rows]
        lam_q = np.linalg.solve(Gm.T @ Gm + 1e-8 * np.eye(r), Gm.T @ yq[rows])
        eq = yq[rows] - Gm @ lam_q
        ar_q, var_q = _ar1_moments(eq)
    else:
        lam_q = np.full(r, 1.0 / (3 * r))
        ar_q, var_q = 0.0, 1.0

    s = 3 * r + n + 1
    params = DFMParams(
        r=r,
        lag=lag,
        loadings=lam,
        loading_q=lam_q,
        factor_coef=coef,
        factor_cov=fcov,
        idio_ar=idio_ar,
        idio_var=idio_var,
        idio_ar_q=float(ar_q),
        idio_var_q=float(var_q),
        init_mean=np.zeros(s),
        init_cov=np.eye(s),
        jitter=jitter,
    )
    ssm = build_state_space(params)
    P0 = stationary_cov(ssm.transition, ssm.innov_cov)
    return replace(params, init_cov=_pd_floor(P0, 1e-10))


# ---------------------------------------------------------------------------
# EM


@dataclass(frozen=True)
class DFMResult:
    params: DFMParams
    loglik_path: np.ndarray
    n_iter: int
    converged: bool
    names: tuple[str, ...]
    start_month: int
    target_mean: float
    target_sd: float


def _em_step(
    params: DFMParams, Y: np.ndarray
) -> tuple[DFMParams, float]:
    """One E+M cycle.  Returns (updated params, loglik at the input params)."""
    r, lag, n = params.r, params.lag, params.n_series
    s = params.state_dim
    T = Y.shape[0]
    ssm = build_state_space(params)
    sm = kalman_smoother(ssm, Y)
    m, P, Plag = sm.mean, sm.cov, sm.cov_lag

    Ess = P + np.einsum("ti,tj->tij", m, m)  # E[s_t s_t']
    Els = Plag + np.einsum("ti,tj->tij", m[1:], m[:-1])  # E[s_t s_{t-1}'], t>=1
    S11 = Ess[1:].sum(axis=0)
    S00 = Ess[:-1].sum(axis=0)
    S10 = Els.sum(axis=0)

    # factor VAR block
    g = lag * r
    Sxx = S00[:g, :g]
    Sxy = S10[:r, :g]
    C = np.linalg.solve(Sxx + 1e-10 * np.eye(g), Sxy.T).T
    coef = np.stack([C[:, l * r : (l + 1) * r] for l in range(lag)])
    coef = _stabilize_factor_coef(coef)
    fcov = _pd_floor((S11[:r, :r] - C @ Sxy.T) / (T - 1), 1e-12)

    # idiosyncratic AR(1) blocks
    idio_ar = params.idio_ar.copy()
    idio_var = params.idio_var.copy()
    for i in range(n):
        pos = 3 * r + i
        den = S00[pos, pos]
        a = np.clip(S10[pos, pos] / den, -0.98, 0.98) if den > 0 else 0.0
        idio_ar[i] = a
        idio_var[i] = max((S11[pos, pos] - a * S10[pos, pos]) / (T - 1), 1e-12)
    pos = s - 1
    den = S00[pos, pos]
    a_q = float(np.clip(S10[pos, pos] / den, -0.98, 0.98)) if den > 0 else 0.0
    var_q = max((S11[pos, pos] - a_q * S10[pos, pos]) / (T - 1), 1e-12)

    # loadings, series by series over observed rows
    loadings = params.loadings.copy()
    obs = ~np.isnan(Y)
    for i in range(n):
        idx = np.nonzero(obs[:, i])[0]
        if idx.size < r + 2:
            continue
        a_mat = Ess[idx][:, :r, :r].sum(axis=0)
        b = (Y[idx, i : i + 1] * m[idx, :r]).sum(axis=0) - Ess[idx][:, :r, 3 * r + i].sum(axis=0)
        loadings[i] = np.linalg.solve(a_mat + 1e-10 * np.eye(r), b)

    # quarterly loading on the stacked factor sum
    G = np.zeros((r, s))
    G[:, 0:r] = G[:, r : 2 * r] = G[:, 2 * r : 3 * r] = np.eye(r)
    loading_q = params.loading_q.copy()
    idxq = np.nonzero(obs[:, n])[0]
    if idxq.size >= r + 2:
        Egg = np.einsum("ab,tbc,dc->tad", G, Ess[idxq], G).sum(axis=0)
        Egq = (Ess[idxq][:, :, s - 1] @ G.T).sum(axis=0)
        b = (Y[idxq, n : n + 1] * (m[idxq] @ G.T)).sum(axis=0) - Egq
        loading_q = np.linalg.solve(Egg + 1e-10 * np.eye(r), b)

    new = DFMParams(
        r=r,
        lag=lag,
        loadings=loadings,
        loading_q=loading_q,
        factor_coef=coef,
        factor_cov=fcov,
        idio_ar=idio_ar,
        idio_var=idio_var,
        idio_ar_q=a_q,
        idio_var_q=float(var_q),
        init_mean=m[0].copy(),
        init_cov=_pd_floor(P[0], 1e-12),
        jitter=params.jitter,
    )
    return new, sm.loglik


def fit_dfm_arrays(
    M: np.ndarray,
    yq: np.ndarray,
    r: int = 1,
    lag: int = 1,
    max_iter: int = 200,
    tol: float = 1e-4,
    jitter: float = JITTER,
    init_rf_trees: int = 100,
    seed: int = 0,
) -> tuple[DFMParams, np.ndarray, bool]:
    """EM on raw arrays: M (T, n) standardized indicators with NaN, yq (T,)
    standardized target values at quarter-end rows (NaN elsewhere).

    Returns (params, loglik path, converged).  A log-likelihood decrease
    beyond 1e-8 raises RuntimeError.
    """
    M = np.asarray(M, dtype=float)
    yq = np.asarray(yq, dtype=float)
    if M.ndim != 2 or yq.shape != (M.shape[0],):
        raise DataError(f"bad shapes M{M.shape} yq{yq.shape}")
    if M.shape[0] < 8:
        raise DataError("need at least 8 monthly rows")
    if not 1 <= lag <= 3:
        raise DataError("factor VAR lag must be 1..3")
    if r < 1 or r > M.shape[1]:
        raise DataError(f"factor count {r} out of range")

    params = _init_params(M, yq, r, lag, jitter, init_rf_trees, seed)
    Y = np.column_stack([M, yq])
    path: list[float] = []
    converged = False
    for _ in range(max_iter):
        params, ll = _em_step(params, Y)
        if path:
            if ll < path[-1] - 1e-8:
                raise RuntimeError(
                    f"EM log-likelihood decreased from {path[-1]:.10f} to {ll:.10f}"
                )
            if abs(ll - path[-1]) / (1.0 + abs(path[-1])) < tol:
                path.append(ll)
                converged = True
                break
        path.append(ll)
    return params, np.asarray(path), converged


def _panel_arrays(panel: PanelDataset, end_month: int | None = None) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Indicator matrix and standardized target row, optionally grid-extended."""
    M = panel.matrix()
    start = panel.start_month
    end = panel.end_month if end_month is None else max(end_month, panel.end_month)
    T = end - start + 1
    if T > M.shape[0]:
        M = np.vstack([M, np.full((T - M.shape[0], M.shape[1]), np.nan)])
    tv = panel.target_by_quarter()
    if len(tv) < 2:
        raise DataError("need at least 2 released target quarters")
    vals = np.array(list(tv.values()))
    t_mean = float(np.mean(vals))
    t_sd = float(np.std(vals))
    if t_sd <= 1e-12:
        raise DataError("target has zero variance")
    yq = np.full(T, np.nan)
    for q, v in tv.items():
        row = quarter_end_month(q) - start
        if 0 <= row < T:
            yq[row] = (v - t_mean) / t_sd
    return M, yq, t_mean, t_sd


def fit_dfm(
    panel: PanelDataset,
    r: int = 1,
    lag: int = 1,
    max_iter: int = 200,
    tol: float = 1e-4,
    jitter: float = JITTER,
    init_rf_trees: int = 100,
    seed: int = 0,
) -> DFMResult:
    """Fit the factor model to a vintage panel (indicators standardized, target
    standardized internally with stored moments)."""
    M, yq, t_mean, t_sd = _panel_arrays(panel)
    params, path, converged = fit_dfm_arrays(
        M, yq, r=r, lag=lag, max_iter=max_iter, tol=tol, jitter=jitter,
        init_rf_trees=init_rf_trees, seed=seed,
    )
    return DFMResult(
        params, path, len(path), converged, panel.names, panel.start_month, t_mean, t_sd
    )


MAX_EXTENSION_MONTHS = 12


def nowcast_dfm(result: DFMResult, panel: PanelDataset, ref_quarter: int) -> float:
    """Smoothed target value for ``ref_quarter``, in percent units.

    The state-space grid is extended (at most 12 months) so the reference
    quarter's third month exists; if the target is already released, the
    smoothed value reproduces it up to the observation jitter.
    """
    end_m = quarter_end_month(ref_quarter)
    if end_m - panel.end_month > MAX_EXTENSION_MONTHS:
        raise DataError(
            f"reference quarter {ref_quarter} is {end_m - panel.end_month} months past the panel"
        )
    if end_m < panel.start_month:
        raise DataError("reference quarter precedes the panel")
    M, yq, t_mean, t_sd = _panel_arrays(panel, end_month=end_m)
    ssm = build_state_space(result.params)
    Y = np.column_stack([M, yq])
    T, n_obs = Y.shape
    c, d = _zeros_cd(T, ssm.transition.shape[0], n_obs)
    _, m_pred, P_pred, _, _ = _kk.kalman_filter(
        Y, ssm.transition, ssm.innov_cov, ssm.loadings, ssm.obs_cov, c, d,
        ssm.init_mean, ssm.init_cov,
    )
    m_sm = _kk.state_smooth_means(
        Y, ssm.transition, ssm.loadings, ssm.obs_cov, c, d, m_pred, P_pred
    )
    row = end_m - panel.start_month
    h_q = ssm.loadings[-1]
    return float(t_mean + t_sd * (h_q @ m_sm[row]))
