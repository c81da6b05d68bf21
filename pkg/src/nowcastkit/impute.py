"""Panel balancing for the ragged edge.

Two tools:

* ``ar_fill_tail`` — fill trailing gaps of one series with iterated forecasts
  from an AR(p) chosen by AIC (p in 1..p_max, common estimation sample).
* ``rf_impute`` — missForest-style iterative random-forest imputation for
  head (and any interior) gaps: initialize with column means, repeatedly
  regress each gappy column on the others, stop when the relative change of
  the imputed cells rises or after ``max_iter`` rounds (the previous iterate
  is returned when the criterion rises).

Observed entries are never modified.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import trees
from .series import DataError, PanelDataset, TimeSeries

MAX_TAIL_GAP = 12


@dataclass(frozen=True)
class ARFit:
    order: int
    intercept: float
    coef: np.ndarray
    aic: float
    resid_var: float


def _ar_lstsq(x: np.ndarray, p: int, t0: int, t1: int) -> tuple[np.ndarray, float, int]:
    """Fit x_t on (1, x_{t-1}, ..., x_{t-p}) for t in [t0, t1]; returns
    (beta, rss, n)."""
    rows = t1 - t0 + 1
    design = np.empty((rows, p + 1))
    design[:, 0] = 1.0
    for lag in range(1, p + 1):
        design[:, lag] = x[t0 - lag : t1 - lag + 1]
    yv = x[t0 : t1 + 1]
    beta, _, _, _ = np.linalg.lstsq(design, yv, rcond=None)
    resid = yv - design @ beta
    return beta, float(resid @ resid), rows


def select_ar_order(x: np.ndarray, p_max: int = 6) -> list[ARFit]:
    """AIC = n*log(RSS/n) + 2*(p+1) for p = 1..p_max on a common sample
    (observations from index p_max onward).  Returns fits sorted by p."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < p_max + 2:
        raise DataError(f"need more than {p_max + 1} observations, got {n}")
    fits = []
    for p in range(1, p_max + 1):
        beta, rss, rows = _ar_lstsq(x, p, p_max, n - 1)
        aic = rows * np.log(max(rss, 1e-300) / rows) + 2.0 * (p + 1)
        fits.append(ARFit(p, float(beta[0]), beta[1:].copy(), float(aic), rss / rows))
    return fits


def ar_fill_tail_values(x: np.ndarray, p_max: int = 6) -> np.ndarray:
    """Fill a trailing run of NaN by iterating an AIC-selected AR(p) forward.

    The observed stretch before the gap must be contiguous, at least
    ``p_max + 8`` long, and the gap at most ``MAX_TAIL_GAP`` periods.
    """
    x = np.asarray(x, dtype=float).copy()
    obs = np.nonzero(~np.isnan(x))[0]
    if obs.size == 0:
        raise DataError("series is entirely missing")
    first, last = int(obs[0]), int(obs[-1])
    gap = x.shape[0] - 1 - last
    if gap == 0:
        return x
    if gap > MAX_TAIL_GAP:
        raise DataError(f"tail gap of {gap} periods exceeds {MAX_TAIL_GAP}")
    hist = x[first : last + 1]
    if np.isnan(hist).any():
        raise DataError("pre-gap history has interior gaps; impute those first")
    if hist.shape[0] < p_max + 8:
        raise DataError(f"need at least {p_max + 8} observations before the tail gap, got {hist.shape[0]}")
    fits = select_ar_order(hist, p_max)
    best = min(fits, key=lambda f: (f.aic, f.order))
    p = best.order
    # refit the winning order on its own maximal sample
    beta, _, _ = _ar_lstsq(hist, p, p, hist.shape[0] - 1)
    buf = list(hist[-p:])
    for k in range(gap):
        nxt = beta[0] + float(np.dot(beta[1:], buf[::-1]))
        x[last + 1 + k] = nxt
        buf.append(nxt)
        buf.pop(0)
    return x


def ar_fill_tail(s: TimeSeries, p_max: int = 6) -> TimeSeries:
    """TimeSeries wrapper around :func:`ar_fill_tail_values`."""
    return TimeSeries(s.name, s.freq, s.dates, ar_fill_tail_values(s.values, p_max), s.units)


def ar_extend_values(x: np.ndarray, n_ahead: int, p_max: int = 6) -> np.ndarray:
    """Append ``n_ahead`` AR forecasts (tail NaNs are filled along the way)."""
    x = np.asarray(x, dtype=float)
    ext = np.concatenate([x, np.full(n_ahead, np.nan)])
    return ar_fill_tail_values(ext, p_max)


# ---------------------------------------------------------------------------
# iterative random-forest imputation


def rf_impute(
    M: np.ndarray,
    n_trees: int = 500,
    mtry: int | None = None,
    min_leaf: int = 5,
    max_depth: int | None = None,
    max_iter: int = 10,
    seed: int = 0,
) -> tuple[np.ndarray, int]:
    """Fill every NaN cell of ``M`` (T, n) by iterated RF regressions.

    Columns are visited in order of increasing missingness; at least one
    column must be fully observed.  Returns (filled matrix, iterations run).
    """
    M = np.asarray(M, dtype=float).copy()
    T, n = M.shape
    mask = np.isnan(M)
    if not mask.any():
        return M, 0
    miss_counts = mask.sum(axis=0)
    if (miss_counts == T).any():
        bad = [int(j) for j in np.nonzero(miss_counts == T)[0]]
        raise DataError(f"columns entirely missing: {bad}")
    if not (miss_counts == 0).any():
        raise DataError("need at least one fully observed column")

    for j in range(n):
        if miss_counts[j]:
            M[mask[:, j], j] = np.nanmean(M[:, j])
    order = sorted((j for j in range(n) if miss_counts[j]), key=lambda j: (miss_counts[j], j))
    others = {j: [k for k in range(n) if k != j] for j in order}

    prev_delta = np.inf
    snapshot = M.copy()
    iters = 0
    for it in range(1, max_iter + 1):
        snapshot = M.copy()
        for j in order:
            cols = others[j]
            obs = ~mask[:, j]
            rf_seed = (seed * 1_000_003 + it * 131 + j) & 0x7FFFFFFF
            model = trees.fit_rf(
                M[obs][:, cols],
                M[obs, j],
                n_trees=n_trees,
                mtry=mtry,
                min_leaf=min_leaf,
                max_depth=max_depth,
                seed=rf_seed,
            )
            M[mask[:, j], j] = model.predict(M[mask[:, j]][:, cols])
        num = float(np.sum((M[mask] - snapshot[mask]) ** 2))
        den = float(np.sum(M[mask] ** 2))
        delta = num / den if den > 0 else 0.0
        iters = it
        if delta >= prev_delta:
            return snapshot, iters
        prev_delta = delta
    return M, iters


def rf_impute_head(panel: PanelDataset, **kwargs) -> PanelDataset:
    """Impute a panel's head gaps in place of its indicator matrix.

    Returns a new panel on the same grid with the NaN cells filled.
    """
    M = panel.matrix()
    filled, _ = rf_impute(M, **kwargs)
    new_inds = tuple(
        TimeSeries(s.name, s.freq, s.dates, filled[:, j], s.units)
        for j, s in enumerate(panel.indicators)
    )
    return PanelDataset(new_inds, panel.target, panel.meta, panel.as_of, panel.scaling)


def balance_matrix(
    M: np.ndarray,
    p_max: int = 6,
    rf_options: dict | None = None,
    seed: int = 0,
) -> np.ndarray:
    """AR-fill every column's tail, then RF-impute whatever gaps remain."""
    M = np.asarray(M, dtype=float).copy()
    for j in range(M.shape[1]):
        M[:, j] = ar_fill_tail_values(M[:, j], p_max)
    if np.isnan(M).any():
        M, _ = rf_impute(M, seed=seed, **(rf_options or {}))
    return M
