"""Mixed-frequency Bayesian VAR with a latent monthly target.

A monthly VAR(p) runs over the monthly indicators plus an unobserved monthly
counterpart of the quarterly target; released quarterly values bind the
latent months through the arithmetic-mean identity

    y_q = (x_t + x_{t-1} + x_{t-2}) / 3        (t = third month of quarter q).

Estimation is Gibbs sampling with three blocks:

1. coefficients | covariance, data: normal draw under an independent
   Minnesota prior (or a flat prior),
2. covariance | coefficients, data: inverse Wishart,
3. latent monthly target | parameters: a simulation smoother on a compact
   state space whose state stacks only the latent target and its lags.  The
   target equation is orthogonalized on the contemporaneous monthly
   innovations, monthly equations enter as measurements loading the lagged
   latent values, and the aggregation identity is a noise-free measurement
   row, so every retained path satisfies it to float roundoff.  Smoothed
   means come from the backward disturbance recursion (predicted state
   covariances turn singular after exact measurements and are never
   inverted), and posterior draws use the mean-correction simulation
   smoother.

Monthly indicators must be complete; ragged tails are filled internally with
AR forecasts (same treatment the bridge models use) and any remaining gap is
an error.  Nowcasts average, over retained draws, the quarterly identity
applied to drawn latent months, simulating the VAR forward when the
reference quarter extends past the data grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import impute
from ._kernels import kalman as _kk
from .series import DataError, PanelDataset, quarter_end_month

#: pass as ``prior`` to sample under a flat coefficient prior (Jeffreys on
#: the covariance); requires enough rows for a proper posterior.
FLAT_PRIOR = "flat"

LAMBDA4 = 100.0  # intercepts are left effectively unshrunk
IW_EXTRA_DF = 2  # prior degrees of freedom = n + IW_EXTRA_DF
MAX_SIM_MONTHS = 12
MAX_STATIONARY_TRIES = 100


# ---------------------------------------------------------------------------
# prior


@dataclass(frozen=True)
class MinnesotaPrior:
    """Lag-decaying shrinkage prior for VAR coefficients, zero prior mean.

    ``coef_var[l, i, j]`` is the prior variance of the coefficient on lag
    ``l+1`` of variable j in equation i:

        (lambda1^2 / (l+1)^lambda3) * (1 if i == j else lambda2) * s_i^2/s_j^2

    with ``s`` the per-variable scale estimates (AR(4) residual sds).
    """

    lambda1: float
    lambda2: float
    lambda3: float
    p: int
    scales: np.ndarray  # (n,)
    coef_var: np.ndarray  # (p, n, n)
    intercept_var: np.ndarray  # (n,)
    names: tuple[str, ...] = ()


def _ar_resid_sd(x: np.ndarray, order: int = 4) -> float:
    x = np.asarray(x, dtype=float)
    x = x[~np.isnan(x)]
    if x.size < 2 or np.std(x) <= 1e-12:
        raise DataError("degenerate scale: series has (near) zero variance")
    if x.size < order + 8:
        return float(np.std(x))
    rows = x.size - order
    X = np.ones((rows, order + 1))
    for l in range(1, order + 1):
        X[:, l] = x[order - l : x.size - l]
    y = x[order:]
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    sd = float(np.sqrt(resid @ resid / max(rows - order - 1, 1)))
    return max(sd, 1e-8)


def build_minnesota_arrays(
    M: np.ndarray,
    yq: np.ndarray | None,
    lambda1: float = 0.2,
    lambda2: float = 0.5,
    lambda3: float = 1.0,
    p: int = 2,
    names: tuple[str, ...] = (),
) -> MinnesotaPrior:
    if p < 1:
        raise DataError("lag order p must be >= 1")
    if lambda1 <= 0 or lambda2 <= 0:
        raise DataError("lambda1 and lambda2 must be positive")
    cols = [M[:, j] for j in range(M.shape[1])]
    if yq is not None:
        cols.append(yq[~np.isnan(yq)])
    scales = np.array([_ar_resid_sd(c) for c in cols])
    n = scales.size
    coef_var = np.empty((p, n, n))
    for l in range(p):
        decay = lambda1**2 / (l + 1) ** lambda3
        for i in range(n):
            for j in range(n):
                cross = 1.0 if i == j else lambda2
                coef_var[l, i, j] = decay * cross * (scales[i] ** 2 / scales[j] ** 2)
    intercept_var = (lambda1 * LAMBDA4 * scales) ** 2
    return MinnesotaPrior(lambda1, lambda2, lambda3, p, scales, coef_var, intercept_var, names)


def build_minnesota(
    panel: PanelDataset,
    lambda1: float = 0.2,
    lambda2: float = 0.5,
    lambda3: float = 1.0,
    p: int = 2,
) -> MinnesotaPrior:
    M, yq, names = _panel_arrays(panel)
    return build_minnesota_arrays(M, yq, lambda1, lambda2, lambda3, p, names)


# ---------------------------------------------------------------------------
# draws container


@dataclass(frozen=True)
class BVARDraws:
    p: int
    names: tuple[str, ...]  # monthly names, then the target when present
    start_month: int
    intercepts: np.ndarray  # (K, n)
    coefs: np.ndarray  # (K, p, n, n)
    sigmas: np.ndarray  # (K, n, n)
    latents: np.ndarray | None  # (K, T) latent monthly target paths
    monthly: np.ndarray  # (T, n_m) completed monthly matrix
    target_rows: np.ndarray | None  # (T,) released target values, NaN elsewhere
    n_burn: int
    seed: int
    thin: int = 1

    @property
    def n_draws(self) -> int:
        return self.intercepts.shape[0]


# ---------------------------------------------------------------------------
# Gibbs blocks


def _companion_radius(B: np.ndarray) -> float:
    p, n, _ = B.shape
    comp = np.zeros((p * n, p * n))
    for l in range(p):
        comp[:n, l * n : (l + 1) * n] = B[l]
    if p > 1:
        comp[n:, : (p - 1) * n] = np.eye((p - 1) * n)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _design(Z: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    T, n = Z.shape
    rows = T - p
    X = np.ones((rows, 1 + n * p))
    for l in range(1, p + 1):
        X[:, 1 + (l - 1) * n : 1 + l * n] = Z[p - l : T - l]
    return X, Z[p:]


def _prior_var_vector(prior: MinnesotaPrior | None, n: int, p: int) -> np.ndarray | None:
    """Equation-major prior variances matching vec(coef matrix by equation)."""
    if prior is None:
        return None
    k = 1 + n * p
    v = np.empty(n * k)
    for i in range(n):
        v[i * k] = prior.intercept_var[i]
        for l in range(p):
            v[i * k + 1 + l * n : i * k + 1 + (l + 1) * n] = prior.coef_var[l, i]
    return v


def _draw_coefs(
    rng: np.random.Generator,
    XtX: np.ndarray,
    XtY: np.ndarray,
    Sigma: np.ndarray,
    v0: np.ndarray | None,
    p: int,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Normal draw of (intercept, lag coefficients) given the covariance."""
    k = XtX.shape[0]
    Sinv = np.linalg.inv(Sigma)
    prec = np.kron(Sinv, XtX)
    if v0 is not None:
        # v0 is equation-major: [eq0 (k entries), eq1, ...]; kron(Sinv, XtX)
        # indexes b the same way (b = vec of the (k, n) matrix by equation)
        prec = prec + np.diag(1.0 / v0)
    rhs = (XtY @ Sinv).T.reshape(-1)  # equation-major stacking
    L = np.linalg.cholesky(0.5 * (prec + prec.T))
    mean = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    for _ in range(MAX_STATIONARY_TRIES):
        b = mean + np.linalg.solve(L.T, rng.standard_normal(n * k))
        Bmat = b.reshape(n, k)  # row i = equation i
        coefs = np.stack(
            [Bmat[:, 1 + l * n : 1 + (l + 1) * n] for l in range(p)]
        )  # (p, n, n): coefs[l][i, j] on lag l+1 of var j in eq i
        if _companion_radius(coefs) < 1.0:
            return Bmat[:, 0].copy(), coefs
    raise RuntimeError(
        f"persistent non-stationarity: {MAX_STATIONARY_TRIES} coefficient draws rejected"
    )


def _draw_iw(rng: np.random.Generator, df: float, S: np.ndarray) -> np.ndarray:
    """Inverse-Wishart draw via the Bartlett decomposition."""
    n = S.shape[0]
    L = np.linalg.cholesky(0.5 * (S + S.T))
    C = np.linalg.solve(L.T, np.eye(n))  # C C' = S^{-1}
    B = np.zeros((n, n))
    for i in range(n):
        B[i, i] = np.sqrt(rng.chisquare(df - i))
        for j in range(i):
            B[i, j] = rng.standard_normal()
    F = C @ B
    Sigma = np.linalg.inv(F @ F.T)
    return 0.5 * (Sigma + Sigma.T)


def _draw_latents(
    rng: np.random.Generator,
    M: np.ndarray,
    yq: np.ndarray,
    intercept: np.ndarray,
    B: np.ndarray,
    Sigma: np.ndarray,
    mu0: float,
    tau0: float,
) -> np.ndarray:
    """Mean-corrected simulation-smoother draw of the latent monthly target."""
    T, n_m = M.shape
    p = B.shape[0]
    q = max(3, p + 1)
    t0 = q - 1

    Smm = Sigma[:n_m, :n_m]
    SmQ = Sigma[:n_m, n_m]
    beta = np.linalg.solve(Smm, SmQ)
    sig_xi2 = max(float(Sigma[n_m, n_m] - SmQ @ beta), 1e-12)

    A = np.zeros((q, q))
    for l in range(p):
        A[0, l] = B[l][n_m, n_m] - beta @ B[l][:n_m, n_m]
    A[1:, :-1] = np.eye(q - 1)
    Qm = np.zeros((q, q))
    Qm[0, 0] = sig_xi2

    H = np.zeros((n_m + 1, q))
    for l in range(1, p + 1):
        H[:n_m, l] = B[l - 1][:n_m, n_m]
    H[n_m, 0:3] = 1.0 / 3.0
    R = np.zeros((n_m + 1, n_m + 1))
    R[:n_m, :n_m] = Smm

    c_m, c_q = intercept[:n_m], intercept[n_m]
    Tn = T - t0
    Y = np.empty((Tn, n_m + 1))
    c_state = np.zeros((Tn, q))
    for t in range(t0, T):
        v = M[t] - c_m
        drift = c_q - beta @ c_m + beta @ M[t]
        for l in range(1, p + 1):
            Bmm = B[l - 1][:n_m, :n_m]
            v = v - Bmm @ M[t - l]
            drift += (B[l - 1][n_m, :n_m] - beta @ Bmm) @ M[t - l]
        Y[t - t0, :n_m] = v
        Y[t - t0, n_m] = yq[t]
        c_state[t - t0, 0] = drift

    # unconditional simulation with the same noise structure (zero offsets)
    chol_mm = np.linalg.cholesky(0.5 * (Smm + Smm.T))
    sd_xi = np.sqrt(sig_xi2)
    wp = np.empty((Tn, q))
    wp[0] = np.sqrt(tau0) * rng.standard_normal(q)
    Yp = np.empty_like(Y)
    for tau in range(Tn):
        if tau > 0:
            wp[tau] = A @ wp[tau - 1]
            wp[tau, 0] += sd_xi * rng.standard_normal()
        Yp[tau, :n_m] = H[:n_m] @ wp[tau] + chol_mm @ rng.standard_normal(n_m)
        Yp[tau, n_m] = H[n_m] @ wp[tau] if not np.isnan(Y[tau, n_m]) else np.nan

    d0 = np.zeros((Tn, n_m + 1))
    m0 = np.full(q, mu0)
    P0 = tau0 * np.eye(q)
    _, mp, Pp, _, _ = _kk.kalman_filter(Y, A, Qm, H, R, c_state, d0, m0, P0)
    m_hat = _kk.state_smooth_means(Y, A, H, R, c_state, d0, mp, Pp)
    czero = np.zeros((Tn, q))
    _, mp2, Pp2, _, _ = _kk.kalman_filter(Yp, A, Qm, H, R, czero, d0, np.zeros(q), P0)
    m_hat_p = _kk.state_smooth_means(Yp, A, H, R, czero, d0, mp2, Pp2)
    w = m_hat + wp - m_hat_p

    path = np.empty(T)
    path[t0:] = w[:, 0]
    for j in range(1, q):
        path[t0 - j] = w[0, j]
    return path


# ---------------------------------------------------------------------------
# sampler


def _init_latents(yq: np.ndarray) -> np.ndarray:
    """Deterministic starting path: spread released values over their months."""
    T = yq.size
    path = np.full(T, np.nan)
    for t in range(T):
        if not np.isnan(yq[t]):
            path[max(t - 2, 0) : t + 1] = yq[t]
    if np.isnan(path).all():
        return np.zeros(T)
    # forward then backward fill
    last = np.nan
    for t in range(T):
        if np.isnan(path[t]):
            path[t] = last
        else:
            last = path[t]
    last = np.nan
    for t in range(T - 1, -1, -1):
        if np.isnan(path[t]):
            path[t] = last
        else:
            last = path[t]
    return path


def gibbs_run_arrays(
    M: np.ndarray,
    yq: np.ndarray | None,
    prior: MinnesotaPrior | str | None = None,
    p: int = 2,
    n_burn: int = 1000,
    n_draws: int = 4000,
    seed: int = 0,
    names: tuple[str, ...] = (),
    start_month: int = 0,
) -> BVARDraws:
    """Gibbs sampler on arrays.

    ``M`` (T, n_m) complete monthly data; ``yq`` (T,) released target values
    at quarter-end rows (NaN elsewhere), or None for a plain monthly VAR with
    no latent block.  ``prior=None`` builds Minnesota defaults; pass
    ``FLAT_PRIOR`` for an improper flat coefficient prior.
    """
    M = np.ascontiguousarray(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DataError("M must be 2-D")
    if np.isnan(M).any():
        raise DataError("monthly block contains NaN; balance the panel first")
    if n_draws < 1:
        raise DataError("n_draws must be >= 1")
    if p < 1:
        raise DataError("lag order p must be >= 1")
    T, n_m = M.shape
    mf = yq is not None
    if mf:
        yq = np.asarray(yq, dtype=float)
        if yq.shape != (T,):
            raise DataError(f"yq must be ({T},), got {yq.shape}")
    n = n_m + 1 if mf else n_m
    k = 1 + n * p
    if T - p < 4:
        raise DataError(f"too few rows ({T}) for lag order {p}")

    flat = isinstance(prior, str)
    if flat and prior != FLAT_PRIOR:
        raise DataError(f"unknown prior tag {prior!r}")
    if prior is None:
        prior = build_minnesota_arrays(M, yq, p=p, names=names)
    if flat:
        if T - p < k + n:
            raise DataError("flat prior needs more rows than coefficients")
        v0 = None
        scales = np.ones(n)
    else:
        if prior.p != p:
            raise DataError(f"prior built for p={prior.p}, sampler uses p={p}")
        v0 = _prior_var_vector(prior, n, p)
        scales = prior.scales

    rng = np.random.default_rng(seed)
    if mf:
        obs_y = yq[~np.isnan(yq)]
        mu0 = float(np.mean(obs_y)) if obs_y.size else 0.0
        tau0 = float(10.0 * np.var(obs_y) + 1.0) if obs_y.size else 10.0
        path = _init_latents(yq)
    Sigma = np.diag(scales**2)
    iw_df0 = 0.0 if flat else n + IW_EXTRA_DF
    S0 = np.zeros((n, n)) if flat else np.diag(scales**2)

    keep_c = np.empty((n_draws, n))
    keep_B = np.empty((n_draws, p, n, n))
    keep_S = np.empty((n_draws, n, n))
    keep_z = np.empty((n_draws, T)) if mf else None

    for it in range(n_burn + n_draws):
        Z = np.column_stack([M, path]) if mf else M
        X, Yr = _design(Z, p)
        XtX = X.T @ X
        XtY = X.T @ Yr
        intercept, coefs = _draw_coefs(rng, XtX, XtY, Sigma, v0, p, n)
        E = Yr - X @ np.concatenate(
            [intercept[:, None]] + [coefs[l] for l in range(p)], axis=1
        ).T
        Sigma = _draw_iw(rng, iw_df0 + Yr.shape[0], S0 + E.T @ E)
        if mf:
            path = _draw_latents(rng, M, yq, intercept, coefs, Sigma, mu0, tau0)
        j = it - n_burn
        if j >= 0:
            keep_c[j] = intercept
            keep_B[j] = coefs
            keep_S[j] = Sigma
            if mf:
                keep_z[j] = path
    return BVARDraws(
        p=p,
        names=tuple(names),
        start_month=start_month,
        intercepts=keep_c,
        coefs=keep_B,
        sigmas=keep_S,
        latents=keep_z,
        monthly=M,
        target_rows=yq.copy() if mf else None,
        n_burn=n_burn,
        seed=seed,
    )


def _panel_arrays(panel: PanelDataset) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    M = panel.matrix()
    for j in range(M.shape[1]):
        col = M[:, j]
        obs = np.nonzero(~np.isnan(col))[0]
        if obs.size == 0 or np.isnan(col[: obs[-1] + 1]).any():
            raise DataError(
                f"series {panel.names[j]} has non-tail gaps; impute the head first"
            )
        M[:, j] = impute.ar_fill_tail_values(col)
    start = panel.start_month
    yq = np.full(M.shape[0], np.nan)
    for q, v in panel.target_by_quarter().items():
        row = quarter_end_month(q) - start
        if 0 <= row < M.shape[0]:
            yq[row] = v
    names = panel.names + (panel.target.name,)
    return M, yq, names


def gibbs_run(
    panel: PanelDataset,
    prior: MinnesotaPrior | str | None = None,
    p: int = 2,
    n_burn: int = 1000,
    n_draws: int = 4000,
    seed: int = 0,
) -> BVARDraws:
    """Run the mixed-frequency sampler on a vintage panel.

    Ragged monthly tails are AR-filled internally; the target stays in its
    own units so released values bind the latent months exactly.
    """
    M, yq, names = _panel_arrays(panel)
    return gibbs_run_arrays(
        M, yq, prior=prior, p=p, n_burn=n_burn, n_draws=n_draws, seed=seed,
        names=names, start_month=panel.start_month,
    )


# ---------------------------------------------------------------------------
# nowcasting


def simulate_quarter_draws(draws: BVARDraws, ref_quarter: int) -> np.ndarray:
    """Per-draw quarterly values for ``ref_quarter`` (mean of its 3 months),
    simulating the VAR forward where the quarter extends past the data grid."""
    if draws.latents is None:
        raise DataError("draws were sampled without a quarterly target")
    if draws.n_draws < 1:
        raise DataError("empty draw set")
    K, T = draws.latents.shape
    end_m = quarter_end_month(ref_quarter)
    rows = np.array([end_m - 2, end_m - 1, end_m]) - draws.start_month
    if rows[0] < draws.p:
        raise DataError("reference quarter starts before the usable grid")
    h = int(rows[2]) - (T - 1)
    if h > MAX_SIM_MONTHS:
        raise DataError(
            f"reference quarter ends {h} months past the panel (max {MAX_SIM_MONTHS})"
        )
    vals = np.empty((K, 3))
    if h <= 0:
        for j in range(3):
            vals[:, j] = draws.latents[:, rows[j]]
        return vals.mean(axis=1)

    n = draws.monthly.shape[1] + 1
    rng = np.random.default_rng((draws.seed * 1_000_003 + ref_quarter * 9176 + 7) & 0x7FFFFFFF)
    p = draws.p
    for kdx in range(K):
        hist = np.column_stack([draws.monthly, draws.latents[kdx]])[T - p :]
        chol = np.linalg.cholesky(draws.sigmas[kdx])
        sim = np.empty((h, n))
        for step in range(h):
            z = draws.intercepts[kdx] + chol @ rng.standard_normal(n)
            for l in range(1, p + 1):
                back = step - l
                zlag = sim[back] if back >= 0 else hist[p + back]
                z = z + draws.coefs[kdx, l - 1] @ zlag
            sim[step] = z
        for j in range(3):
            r = int(rows[j])
            vals[kdx, j] = draws.latents[kdx, r] if r <= T - 1 else sim[r - T, n - 1]
    return vals.mean(axis=1)


def nowcast_bvar(draws: BVARDraws, ref_quarter: int) -> float:
    """Posterior-mean nowcast: average the per-draw quarterly values."""
    return float(np.mean(simulate_quarter_draws(draws, ref_quarter)))


def dump_draws_csv(draws: BVARDraws, path) -> None:
    """Diagnostic dump: one row per (draw index, coefficient id, value)."""
    from .dataio import write_table_csv

    rows = []
    n = draws.intercepts.shape[1]
    for kdx in range(draws.n_draws):
        for i in range(n):
            rows.append((kdx, f"c[{i}]", draws.intercepts[kdx, i]))
        for l in range(draws.p):
            for i in range(n):
                for j in range(n):
                    rows.append((kdx, f"B{l + 1}[{i},{j}]", draws.coefs[kdx, l, i, j]))
        for i in range(n):
            for j in range(i, n):
                rows.append((kdx, f"Sigma[{i},{j}]", draws.sigmas[kdx, i, j]))
    write_table_csv(path, ["draw", "coef", "value"], rows)
