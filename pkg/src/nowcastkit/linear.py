"""Linear bridge regressions: OLS and the lasso with BIC-selected penalty.

The lasso minimizes (1/2n)*RSS + lambda*||beta||_1 with an unpenalized
intercept, solved by cyclic coordinate descent with soft-thresholding.
``select_variables`` walks a 50-point log-spaced grid from lambda_max (the
smallest penalty that zeroes every coefficient) down to lambda_max/1000 and
keeps the active set with the best BIC.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import lasso as _kl
from .series import DataError


@dataclass(frozen=True)
class OLSFit:
    intercept: float
    coef: np.ndarray
    resid_var: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return self.intercept + X @ self.coef


def fit_ols(X: np.ndarray, y: np.ndarray) -> OLSFit:
    """Least squares with intercept.  Rank-deficient designs raise an error
    that names the offending columns."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError(f"incompatible shapes X{X.shape} y{y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("OLS inputs must be finite")
    n, p = X.shape
    design = np.column_stack([np.ones(n), X])
    rank = np.linalg.matrix_rank(design)
    if rank < p + 1:
        offending: list[int] = []
        kept = [np.ones(n)]
        for j in range(p):
            trial = np.column_stack(kept + [X[:, j]])
            if np.linalg.matrix_rank(trial) == trial.shape[1]:
                kept.append(X[:, j])
            else:
                offending.append(j)
        raise DataError(f"rank-deficient design; offending columns {offending}")
    beta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    dof = max(n - p - 1, 1)
    return OLSFit(float(beta[0]), beta[1:].copy(), float(resid @ resid / dof))


# ---------------------------------------------------------------------------
# lasso


@dataclass(frozen=True)
class LassoFit:
    lam: float
    intercept: float
    coef: np.ndarray
    active_set: tuple[int, ...]
    n_sweeps: int
    converged: bool

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return self.intercept + X @ self.coef


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which every lasso coefficient is zero."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    yc = y - np.mean(y)
    return float(np.max(np.abs(X.T @ yc)) / X.shape[0])


def fit_lasso(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-7,
    max_sweeps: int = 100_000,
    warm_start: np.ndarray | None = None,
) -> LassoFit:
    """Coordinate-descent lasso at a single penalty.

    Expects standardized columns (the intercept absorbs the mean of y).
    Sweeps cycle until the largest coefficient change is below ``tol``.
    """
    X = np.asfortranarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError(f"incompatible shapes X{X.shape} y{y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("lasso inputs must be finite")
    if lam <= 0:
        raise DataError("lambda must be > 0 (use fit_ols for the unpenalized fit)")
    ybar = float(np.mean(y))
    yc = y - ybar
    beta = np.zeros(X.shape[1]) if warm_start is None else np.array(warm_start, dtype=float)
    sweeps, ok = _kl.cd_lasso(X, yc, lam, beta, max_sweeps, tol)
    # intercept for the uncentered problem; with centered columns this is ybar
    intercept = ybar - float(np.mean(X, axis=0) @ beta)
    active = tuple(int(j) for j in np.nonzero(beta != 0.0)[0])
    return LassoFit(float(lam), intercept, beta, active, int(sweeps), bool(ok))


def kkt_violation(X: np.ndarray, y: np.ndarray, fit: LassoFit) -> float:
    """Largest violation of the lasso stationarity conditions (0 = optimal)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    r = y - fit.intercept - X @ fit.coef
    g = X.T @ r / X.shape[0]
    worst = 0.0
    for j in range(X.shape[1]):
        if fit.coef[j] == 0.0:
            worst = max(worst, abs(g[j]) - fit.lam)
        else:
            worst = max(worst, abs(g[j] - fit.lam * np.sign(fit.coef[j])))
    return float(worst)


# ---------------------------------------------------------------------------
# BIC selection


@dataclass(frozen=True)
class SelectionResult:
    active_set: tuple[int, ...]
    lam: float
    bic: float
    fallback_used: bool
    fits: tuple[LassoFit, ...]


def _bic(n: int, rss: float, k_active: int) -> float:
    # +1 counts the intercept
    return n * np.log(max(rss, 1e-12) / n) + np.log(n) * (k_active + 1)


def select_variables(
    X: np.ndarray,
    y: np.ndarray,
    n_grid: int = 50,
    grid_ratio: float = 1000.0,
    tol: float = 1e-7,
) -> SelectionResult:
    """Pick the lasso active set with the best BIC along a penalty path.

    Inputs are standardized internally (population sd).  The path is warm-
    started from the largest penalty.  If the winning active set is empty,
    all variables are returned with ``fallback_used=True``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError(f"incompatible shapes X{X.shape} y{y.shape}")
    n, p = X.shape
    if n < 12:
        raise DataError(f"need at least 12 observations to select variables, got {n}")
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd <= 1e-12):
        bad = [int(j) for j in np.nonzero(sd <= 1e-12)[0]]
        raise DataError(f"zero-variance columns {bad}")
    Z = (X - mu) / sd

    lmax = lambda_max(Z, y)
    if lmax <= 0:
        raise DataError("degenerate selection problem: all correlations are zero")
    grid = np.exp(np.linspace(np.log(lmax), np.log(lmax / grid_ratio), n_grid))
    beta = np.zeros(p)
    best: tuple[float, int] | None = None  # (bic, index)
    fits: list[LassoFit] = []
    for i, lam in enumerate(grid):
        fit = fit_lasso(Z, y, float(lam), tol=tol, warm_start=beta)
        beta = fit.coef.copy()
        r = y - fit.intercept - Z @ fit.coef
        bic = _bic(n, float(r @ r), len(fit.active_set))
        fits.append(fit)
        if best is None or bic < best[0] - 1e-12:
            best = (bic, i)
    assert best is not None
    bic, idx = best
    active = fits[idx].active_set
    fallback = len(active) == 0
    if fallback:
        active = tuple(range(p))
    return SelectionResult(active, float(grid[idx]), float(bic), fallback, tuple(fits))
