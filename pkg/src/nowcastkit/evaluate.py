"""Pseudo-real-time nowcasting exercises and scoring.

The monthly exercise walks an announcement calendar: for each reference
quarter it builds five end-of-month vintages (the quarter's three months
plus the two months before the target's release), refits every model on the
expanding window each time, and records one nowcast per (model, vintage).
Scores are mean absolute errors per horizon; ablation runs are compared via
MAE differences (positive = the richer dataset helped).

The daily exercise re-runs the same idea on a 150-day window with synthetic
30-day months: an observation for period month m announced with lag L on day
D becomes available on synthetic day 30*(m + L - M1) + D, with M1 the first
month of the reference quarter, and daily series accrue day by day.  The
vintage at day 30k is information-identical to the end-of-month vintage of
month k.
"""
from __future__ import annotations

import datetime as dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import bvar as bvar_mod
from . import combine as combine_mod
from . import dfm as dfm_mod
from . import impute, linear, trees
from .series import (
    DAILY_ANNOUNCE,
    DataError,
    PanelDataset,
    SeriesMeta,
    TimeSeries,
    assemble_panel,
    clamp_day,
    month_index,
    month_last_day,
    quarter_end_month,
    quarter_index,
    quarter_months,
    target_release_date,
    vintage_at,
)

MODELS = ("ar", "dfm", "bvar", "lm", "rf", "gbm")
#: the benchmark is never folded into combinations
COMBO_EXCLUDE = ("ar",)
N_HORIZONS = 5
DAYS_PER_MONTH = 30
DAY_SPAN = 150


@dataclass(frozen=True)
class NowcastRecord:
    ref_quarter: int
    horizon: int  # 1..5 in the monthly exercise, day 1..150 in the daily one
    model: str
    value: float
    vintage: dt.date
    combo: str | None = None


@dataclass(frozen=True)
class SelectionEvent:
    vintage: dt.date
    ref_quarter: int
    horizon: int
    active: tuple[str, ...]
    bigdata_chosen: bool


@dataclass(frozen=True)
class EvalConfig:
    series: dict[str, TimeSeries]
    meta: dict[str, SeriesMeta]
    start_quarter: int
    end_quarter: int
    models: tuple[str, ...] = ("ar", "lm", "rf", "gbm", "dfm")
    combos: tuple[str, ...] = ()
    horizons: tuple[int, ...] = (1, 2, 3, 4, 5)
    preselect: bool = False
    seed: int = 0
    jobs: int = 1
    options: dict[str, dict] = field(default_factory=dict)


@dataclass(frozen=True)
class ExerciseResult:
    records: tuple[NowcastRecord, ...]
    truth: dict[int, float]
    selection: tuple[SelectionEvent, ...]
    models: tuple[str, ...]
    combos: tuple[str, ...]


# ---------------------------------------------------------------------------
# shared pieces


def _target_meta(cfg: EvalConfig) -> SeriesMeta:
    targets = [m for m in cfg.meta.values() if m.target]
    if len(targets) != 1:
        raise DataError(f"need exactly one target series, found {len(targets)}")
    return targets[0]


def _final_truth(cfg: EvalConfig, tmeta: SeriesMeta) -> dict[int, float]:
    s = cfg.series[tmeta.name]
    return {
        quarter_index(d): float(v)
        for d, v in zip(s.dates, s.values)
        if not np.isnan(v)
    }


def _derived_seed(base: int, a: int, b: int) -> int:
    return (base * 1_000_003 + a * 8191 + b * 131 + 17) & 0x7FFFFFFF


def _balanced_panel(panel: PanelDataset, seed: int, n_trees: int = 100) -> PanelDataset:
    """AR-fill tails and RF-impute remaining gaps, keeping the grid."""
    M = panel.matrix()
    if not np.isnan(M).any():
        return panel
    filled = impute.balance_matrix(M, rf_options={"n_trees": n_trees}, seed=seed)
    out = []
    for j, s in enumerate(panel.indicators):
        out.append(TimeSeries(s.name, s.freq, s.dates, filled[:, j], s.units))
    return replace(panel, indicators=tuple(out))


def quarterly_design(
    panel: PanelDataset, ref_quarter: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[str, ...], tuple[int, ...]]:
    """Bridge design: quarterly means of (AR-extended) monthly indicators.

    Returns (X, y, x_ref, names, quarters): one row per released target
    quarter, plus the reference-quarter row built from AR-extended months.
    The panel must be balanced (no NaN).
    """
    M = panel.matrix()
    if np.isnan(M).any():
        raise DataError("bridge design needs a balanced panel")
    start = panel.start_month
    end_need = quarter_end_month(ref_quarter)
    extra = end_need - panel.end_month
    if extra > 0:
        ext = np.empty((M.shape[0] + extra, M.shape[1]))
        for j in range(M.shape[1]):
            ext[:, j] = impute.ar_extend_values(M[:, j], extra)
        M = ext
    tv = panel.target_by_quarter()
    quarters = sorted(q for q in tv if quarter_months(q)[0] >= start)
    if not quarters:
        raise DataError("no released target quarters inside the panel grid")

    def qrow(q: int) -> np.ndarray:
        m1 = quarter_months(q)[0] - start
        return M[m1 : m1 + 3].mean(axis=0)

    X = np.vstack([qrow(q) for q in quarters])
    y = np.array([tv[q] for q in quarters])
    x_ref = qrow(ref_quarter)
    return X, y, x_ref, panel.names, tuple(quarters)


def ar_benchmark(panel: PanelDataset, ref_quarter: int) -> float:
    """Quarterly AR(1) with intercept on released target values, iterated
    forward to the reference quarter."""
    tv = panel.target_by_quarter()
    qs = sorted(tv)
    pairs = [(tv[q - 1], tv[q]) for q in qs if q - 1 in tv]
    if len(pairs) < 6:
        raise DataError("AR benchmark needs at least 6 consecutive quarter pairs")
    X = np.column_stack([np.ones(len(pairs)), [p[0] for p in pairs]])
    yv = np.array([p[1] for p in pairs])
    coef, *_ = np.linalg.lstsq(X, yv, rcond=None)
    a, b = float(coef[0]), float(coef[1])
    last_q = qs[-1]
    if ref_quarter <= last_q:
        raise DataError(f"reference quarter {ref_quarter} already released")
    val = tv[last_q]
    for _ in range(ref_quarter - last_q):
        val = a + b * val
    return float(val)


# ---------------------------------------------------------------------------
# one vintage of the monthly exercise


def _one_vintage(
    cfg: EvalConfig,
    truth: dict[int, float],
    ref_q: int,
    horizon: int,
    as_of: dt.date,
) -> tuple[list[NowcastRecord], SelectionEvent | None]:
    view = vintage_at(cfg.series, cfg.meta, as_of)
    panel = view.panel
    seed_v = _derived_seed(cfg.seed, month_index(as_of), horizon)
    records: list[NowcastRecord] = []
    event: SelectionEvent | None = None

    bridge_models = [m for m in cfg.models if m in ("lm", "rf", "gbm")]
    need_balanced = bool(bridge_models) or "bvar" in cfg.models or cfg.preselect
    bal_trees = int(cfg.options.get("balance", {}).get("n_trees", 100))
    balanced = _balanced_panel(panel, seed_v + 3, bal_trees) if need_balanced else panel

    X = y = x_ref = None
    if bridge_models or cfg.preselect:
        X, y, x_ref, names, _ = quarterly_design(balanced, ref_q)
        if cfg.preselect:
            sel = linear.select_variables(X, y)
            active = np.asarray(sel.active_set, dtype=int)
            chosen = tuple(names[j] for j in active)
            big = any(cfg.meta[nm].kind == "bigdata" for nm in chosen)
            event = SelectionEvent(as_of, ref_q, horizon, chosen, big)
            X = X[:, active]
            x_ref = x_ref[active]

    for model in cfg.models:
        opts = cfg.options.get(model, {})
        if model == "truth":  # perfect-foresight stub for harness checks
            value = truth[ref_q]
        elif model == "ar":
            value = ar_benchmark(panel, ref_q)
        elif model == "lm":
            fit = linear.fit_ols(X, y)
            value = float(fit.predict(x_ref[None, :])[0])
        elif model == "rf":
            opts = {"n_trees": 500, "min_leaf": 5, **opts}
            rf = trees.fit_rf(X, y, seed=seed_v, **opts)
            value = float(trees.predict_rf(rf, x_ref))
        elif model == "gbm":
            gb = trees.fit_gbm(X, y, **opts)
            value = float(trees.predict_gbm(gb, x_ref))
        elif model == "dfm":
            opts = {"max_iter": 50, "init_rf_trees": 50, **opts}
            res = dfm_mod.fit_dfm(panel, seed=seed_v + 2, **opts)
            value = dfm_mod.nowcast_dfm(res, panel, ref_q)
        elif model == "bvar":
            opts = {"n_burn": 200, "n_draws": 800, **opts}
            draws = bvar_mod.gibbs_run(balanced, seed=seed_v + 1, **opts)
            value = bvar_mod.nowcast_bvar(draws, ref_q)
        else:
            raise DataError(f"unknown model {model!r}")
        records.append(NowcastRecord(ref_q, horizon, model, float(value), as_of))
    return records, event


def _vintage_plan(cfg: EvalConfig, tmeta: SeriesMeta):
    for q in range(cfg.start_quarter, cfg.end_quarter + 1):
        m1 = quarter_months(q)[0]
        for i in range(N_HORIZONS):
            if i + 1 not in cfg.horizons:
                continue
            as_of = month_last_day(m1 + i)
            if target_release_date(tmeta, q) <= as_of:
                raise DataError(
                    f"calendar inconsistency: quarter {q} already released at {as_of}"
                )
            yield q, i + 1, as_of


def run_exercise(cfg: EvalConfig) -> ExerciseResult:
    """Run the monthly pseudo-real-time exercise over the configured span."""
    for m in cfg.models:
        if m not in MODELS + ("truth",):
            raise DataError(f"unknown model {m!r}")
    for s in cfg.combos:
        if s not in combine_mod.SCHEMES:
            raise DataError(f"unknown combination scheme {s!r}")
    for h in cfg.horizons:
        if not 1 <= h <= N_HORIZONS:
            raise DataError(f"horizons must lie in 1..{N_HORIZONS}, got {h}")
    tmeta = _target_meta(cfg)
    truth = _final_truth(cfg, tmeta)
    plan = list(_vintage_plan(cfg, tmeta))

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(
                pool.map(lambda job: _one_vintage(cfg, truth, *job), plan)
            )
    else:
        results = [_one_vintage(cfg, truth, *job) for job in plan]

    records: list[NowcastRecord] = []
    selection: list[SelectionEvent] = []
    for recs, event in results:
        records.extend(recs)
        if event is not None:
            selection.append(event)

    if cfg.combos:
        records.extend(_combination_records(cfg, tmeta, truth, records, plan))
    records.sort(key=lambda r: (r.vintage, r.ref_quarter, r.combo or "", r.model))
    return ExerciseResult(tuple(records), truth, tuple(selection), cfg.models, cfg.combos)


def _combination_records(cfg, tmeta, truth, records, plan) -> list[NowcastRecord]:
    member = [m for m in cfg.models if m not in COMBO_EXCLUDE and m != "truth"]
    if not member:
        return []
    base = [r for r in records if r.combo is None and r.model in member]
    out: list[NowcastRecord] = []
    for q, h, as_of in plan:
        vals = {r.model: r.value for r in base if r.ref_quarter == q and r.horizon == h}
        if len(vals) != len(member):
            continue
        settled = [
            qq for qq in sorted(truth)
            if qq < q and target_release_date(tmeta, qq) <= as_of
        ]
        maes = combine_mod.rolling_mae(base, truth, settled, h)
        for scheme in cfg.combos:
            w = combine_mod.combination_weights(scheme, maes, sorted(vals), h)
            v = combine_mod.combine_value(scheme, vals, w)
            out.append(NowcastRecord(q, h, scheme, v, as_of, combo=scheme))
    return out


def nowcast_once(
    series,
    meta,
    ref_quarter: int,
    as_of: dt.date,
    models: tuple[str, ...] = ("ar", "lm", "rf", "gbm", "dfm"),
    seed: int = 0,
    options: dict | None = None,
) -> dict[str, float]:
    """Nowcast one reference quarter from the data visible at ``as_of``."""
    cfg = EvalConfig(
        dict(series), dict(meta), ref_quarter, ref_quarter,
        tuple(models), seed=seed, options=options or {},
    )
    for m in cfg.models:
        if m not in MODELS:
            raise DataError(f"unknown model {m!r}")
    tmeta = _target_meta(cfg)
    if target_release_date(tmeta, ref_quarter) <= as_of:
        raise DataError(f"quarter {ref_quarter} is already released at {as_of}")
    truth = _final_truth(cfg, tmeta)
    m1 = quarter_months(ref_quarter)[0]
    horizon = max(1, min(N_HORIZONS, month_index(as_of) - m1 + 1))
    recs, _ = _one_vintage(cfg, truth, ref_quarter, horizon, as_of)
    return {r.model: r.value for r in recs}


# ---------------------------------------------------------------------------
# scoring


def mae(records, truth: dict[int, float], model: str, horizon: int) -> float:
    errs = []
    for r in records:
        if r.model == model and r.horizon == horizon:
            if r.ref_quarter not in truth:
                raise DataError(f"no released value for quarter {r.ref_quarter}")
            errs.append(abs(truth[r.ref_quarter] - r.value))
    if not errs:
        raise DataError(f"no records for model {model!r} at horizon {horizon}")
    return float(np.mean(errs))


def maed(records_full, records_reduced, truth, model: str, horizon: int) -> float:
    """MAE(reduced dataset) minus MAE(full dataset): positive means the extra
    data in the full run helped."""

    def cells(records):
        out = {}
        for r in records:
            if r.model == model and r.horizon == horizon:
                out[r.ref_quarter] = r.value
        return out

    cf, cr = cells(records_full), cells(records_reduced)
    if set(cf) != set(cr):
        raise DataError(
            f"mismatched record cells for {model!r} h{horizon}: "
            f"{sorted(set(cf) ^ set(cr))}"
        )
    if not cf:
        raise DataError(f"no records for model {model!r} at horizon {horizon}")
    return mae(records_reduced, truth, model, horizon) - mae(
        records_full, truth, model, horizon
    )


def score_table(result: ExerciseResult, horizons=None):
    """Rows (model, horizon, mae) for every model and combination scheme."""
    if horizons is None:
        horizons = sorted({r.horizon for r in result.records})
    rows = []
    for model in list(result.models) + list(result.combos):
        for h in horizons:
            rows.append((model, h, mae(result.records, result.truth, model, h)))
    return rows


@dataclass(frozen=True)
class SelectionSummary:
    shares: dict[str, float]  # variable -> share of vintages selected
    dates: tuple[tuple[dt.date, bool], ...]  # (vintage, any big-data chosen)


def selection_ratios(events, names=None) -> SelectionSummary:
    events = list(events)
    if not events:
        raise DataError("no selection events recorded")
    seen = set()
    for e in events:
        seen.update(e.active)
    allnames = sorted(seen if names is None else set(names) | seen)
    shares = {
        nm: sum(1 for e in events if nm in e.active) / len(events) for nm in allnames
    }
    dates = tuple((e.vintage, e.bigdata_chosen) for e in events)
    return SelectionSummary(shares, dates)


# ---------------------------------------------------------------------------
# daily exercise on synthetic 30-day months


def synthetic_release_day(meta: SeriesMeta, period_month: int, ref_quarter: int) -> int:
    """Synthetic day (1-based from day 1 of the quarter's first month) on
    which the observation for ``period_month`` becomes available."""
    m1 = quarter_months(ref_quarter)[0]
    if meta.announce_day == DAILY_ANNOUNCE:
        raise DataError(f"{meta.name}: daily series have per-observation days")
    day = min(int(meta.announce_day), DAYS_PER_MONTH)
    return DAYS_PER_MONTH * (period_month + meta.announce_lag_months - m1) + day


def _daily_truncate(s: TimeSeries, meta: SeriesMeta, ref_quarter: int, day: int) -> TimeSeries:
    m1 = quarter_months(ref_quarter)[0]
    if meta.announce_day == DAILY_ANNOUNCE:
        keep = [
            (month_index(d) - m1) * DAYS_PER_MONTH + min(d.day, DAYS_PER_MONTH) <= day
            for d in s.dates
        ]
    else:
        if meta.target:
            pmonth = [quarter_end_month(quarter_index(d)) for d in s.dates]
        else:
            pmonth = [month_index(d) for d in s.dates]
        keep = [
            synthetic_release_day(meta, pm, ref_quarter) <= day for pm in pmonth
        ]
    return s.select(keep)


def daily_vintage(series, meta, ref_quarter: int, day: int):
    """Information set on synthetic day 1..150 of the reference window."""
    if not 1 <= day <= DAY_SPAN:
        raise DataError(f"day must be 1..{DAY_SPAN}, got {day}")
    m1 = quarter_months(ref_quarter)[0]
    cur_month = m1 + (day - 1) // DAYS_PER_MONTH
    truncated = {
        name: _daily_truncate(s, meta[name], ref_quarter, day)
        for name, s in series.items()
    }
    return assemble_panel(truncated, meta, month_last_day(cur_month))


def _daily_date(ref_quarter: int, day: int) -> dt.date:
    m1 = quarter_months(ref_quarter)[0]
    mi = m1 + (day - 1) // DAYS_PER_MONTH
    return clamp_day(mi, (day - 1) % DAYS_PER_MONTH + 1)


def daily_exercise(cfg: EvalConfig) -> tuple[ExerciseResult, list[tuple[int, float, float]]]:
    """150-day exercise.  Returns the records plus the model-averaged daily
    MAE curve as rows (day, raw MAE, trailing 7-day moving average)."""
    tmeta = _target_meta(cfg)
    truth = _final_truth(cfg, tmeta)
    models = [m for m in cfg.models if m != "truth"]
    bal_trees = int(cfg.options.get("balance", {}).get("n_trees", 100))
    max_day = int(cfg.options.get("daily", {}).get("max_day", DAY_SPAN))
    day_step = int(cfg.options.get("daily", {}).get("step", 1))
    if not 1 <= max_day <= DAY_SPAN or day_step < 1:
        raise DataError(f"bad daily options: max_day={max_day}, step={day_step}")
    records: list[NowcastRecord] = []
    for q in range(cfg.start_quarter, cfg.end_quarter + 1):
        for day in range(1, max_day + 1, day_step):
            view = daily_vintage(cfg.series, cfg.meta, q, day)
            seed_v = _derived_seed(cfg.seed, q * 1000 + day, 0)
            vdate = _daily_date(q, day)
            panel = view.panel
            balanced = None
            X = y = x_ref = None
            for model in models:
                opts = cfg.options.get(model, {})
                if model in ("lm", "rf", "gbm") and X is None:
                    balanced = _balanced_panel(panel, seed_v + 3, bal_trees)
                    X, y, x_ref, _, _ = quarterly_design(balanced, q)
                if model == "ar":
                    value = ar_benchmark(panel, q)
                elif model == "lm":
                    value = float(linear.fit_ols(X, y).predict(x_ref[None, :])[0])
                elif model == "rf":
                    o = {"n_trees": 500, "min_leaf": 5, **opts}
                    value = float(trees.predict_rf(trees.fit_rf(X, y, seed=seed_v, **o), x_ref))
                elif model == "gbm":
                    value = float(trees.predict_gbm(trees.fit_gbm(X, y, **opts), x_ref))
                elif model == "dfm":
                    o = {"max_iter": 50, "init_rf_trees": 50, **opts}
                    res = dfm_mod.fit_dfm(panel, seed=seed_v + 2, **o)
                    value = dfm_mod.nowcast_dfm(res, panel, q)
                elif model == "bvar":
                    o = {"n_burn": 200, "n_draws": 800, **opts}
                    if balanced is None:
                        balanced = _balanced_panel(panel, seed_v + 3, bal_trees)
                    value = bvar_mod.nowcast_bvar(
                        bvar_mod.gibbs_run(balanced, seed=seed_v + 1, **o), q
                    )
                else:
                    raise DataError(f"unknown model {model!r}")
                records.append(NowcastRecord(q, day, model, float(value), vdate))
    result = ExerciseResult(tuple(records), truth, (), tuple(models), ())
    return result, daily_curve(result)


def daily_curve(result: ExerciseResult) -> list[tuple[int, float, float]]:
    """Model-averaged absolute error per day, averaged over reference
    quarters, with a trailing 7-day moving average."""
    by_day: dict[int, list[float]] = {}
    quarters = sorted({r.ref_quarter for r in result.records})
    for q in quarters:
        for day in sorted({r.horizon for r in result.records if r.ref_quarter == q}):
            vals = [
                r.value
                for r in result.records
                if r.ref_quarter == q and r.horizon == day and r.combo is None
            ]
            if not vals or q not in result.truth:
                continue
            err = abs(result.truth[q] - float(np.mean(vals)))
            by_day.setdefault(day, []).append(err)
    rows = []
    days = sorted(by_day)
    raw = {d: float(np.mean(by_day[d])) for d in days}
    for d in days:
        window = [raw[dd] for dd in days if d - 6 <= dd <= d]
        rows.append((d, raw[d], float(np.mean(window))))
    return rows
