"""Nowcast combination: simple average, median, inverse-MAE weights, and
inverse-rank weights over a rolling window of settled quarters.

Weight-based schemes score each model by its mean absolute error over the
trailing two years (8 quarters) of reference quarters whose target value had
already been released at the decision date; with fewer than 4 such quarters
the schemes fall back to equal weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import DataError

SCHEMES = ("mean", "median", "rpw", "rank")
DEFAULT_WINDOW = 8
MIN_HISTORY = 4


def combine_simple(values) -> float:
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise DataError("cannot combine an empty nowcast set")
    return float(vals.mean())


def combine_median(values) -> float:
    """Sample median; an even count averages the middle two."""
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise DataError("cannot combine an empty nowcast set")
    return float(np.median(vals))


@dataclass(frozen=True)
class WeightSet:
    horizon: int
    weights: dict[str, float]
    scheme: str

    def __post_init__(self):
        if self.horizon < 1:
            raise DataError(f"horizon must be >= 1, got {self.horizon}")
        if not self.weights:
            raise DataError("weight set is empty")
        w = np.array(list(self.weights.values()))
        if (w < 0).any():
            raise DataError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DataError(f"weights sum to {w.sum()!r}, not 1")

    def apply(self, values: dict[str, float]) -> float:
        return float(sum(self.weights[m] * values[m] for m in self.weights))


def _equal_weights(models, horizon: int, scheme: str) -> WeightSet:
    models = list(models)
    return WeightSet(horizon, {m: 1.0 / len(models) for m in models}, scheme)


def weights_rpw(maes: dict[str, float], horizon: int) -> WeightSet:
    """Inverse-MAE weights: w_l = MAE_l^-1 / sum of inverses.

    Models with an exact-zero MAE split the whole weight among themselves.
    """
    if not maes:
        raise DataError("no rolling MAEs given")
    zero = [m for m, v in maes.items() if v == 0.0]
    if zero:
        w = {m: (1.0 / len(zero) if m in zero else 0.0) for m in maes}
        return WeightSet(horizon, w, "rpw")
    if any(v < 0 for v in maes.values()):
        raise DataError("negative MAE")
    inv = {m: 1.0 / v for m, v in maes.items()}
    tot = sum(inv.values())
    return WeightSet(horizon, {m: inv[m] / tot for m in inv}, "rpw")


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ascending ranks starting at 1; ties receive the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def weights_rank(maes: dict[str, float], horizon: int) -> WeightSet:
    """Inverse-rank weights: rank 1 = lowest MAE; w_l = R_l^-1 / sum R^-1."""
    if not maes:
        raise DataError("no rolling MAEs given")
    models = list(maes)
    ranks = _average_ranks(np.array([maes[m] for m in models]))
    inv = 1.0 / ranks
    inv /= inv.sum()
    return WeightSet(horizon, dict(zip(models, inv)), "rank")


def rolling_mae(
    records,
    truth: dict[int, float],
    settled,
    horizon: int,
    window: int = DEFAULT_WINDOW,
    min_history: int = MIN_HISTORY,
) -> dict[str, float] | None:
    """Per-model MAE over the trailing ``window`` settled quarters at one
    horizon.

    ``records`` is an iterable of objects with ``ref_quarter``, ``horizon``,
    ``model`` and ``value`` attributes; ``settled`` lists reference quarters
    (chronological) whose target was released at the decision date.  Returns
    None when fewer than ``min_history`` settled quarters have a full set of
    model records — callers should fall back to equal weights.
    """
    settled = [q for q in settled if q in truth]
    if not settled:
        return None
    recs = [r for r in records if r.horizon == horizon and r.ref_quarter in settled]
    models = sorted({r.model for r in recs})
    if not models:
        return None
    by_model: dict[str, dict[int, float]] = {m: {} for m in models}
    for r in recs:
        by_model[r.model][r.ref_quarter] = r.value
    usable = [q for q in settled if all(q in by_model[m] for m in models)]
    usable = usable[-window:]
    if len(usable) < min_history:
        return None
    return {
        m: float(np.mean([abs(truth[q] - by_model[m][q]) for q in usable]))
        for m in models
    }


def combination_weights(scheme: str, maes: dict[str, float] | None, models, horizon: int) -> WeightSet:
    """Weight set for ``scheme``; equal weights when no usable history."""
    if scheme not in SCHEMES:
        raise DataError(f"unknown combination scheme {scheme!r}")
    if scheme in ("mean", "median") or maes is None:
        return _equal_weights(models, horizon, scheme)
    if scheme == "rpw":
        return weights_rpw(maes, horizon)
    return weights_rank(maes, horizon)


def combine_value(scheme: str, values: dict[str, float], weights: WeightSet | None = None) -> float:
    """Apply a combination scheme to one vintage's per-model nowcasts."""
    if scheme == "mean":
        return combine_simple(values.values())
    if scheme == "median":
        return combine_median(values.values())
    if scheme not in SCHEMES:
        raise DataError(f"unknown combination scheme {scheme!r}")
    if weights is None:
        return combine_simple(values.values())
    missing = set(weights.weights) - set(values)
    if missing:
        raise DataError(f"missing nowcasts for weighted models: {sorted(missing)}")
    return weights.apply(values)
