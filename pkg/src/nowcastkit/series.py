"""Core time-series types, growth transforms, and the pseudo-real-time calendar.

Conventions
-----------
* Monthly and quarterly observations are dated at the period end (last
  calendar day of the month; last day of the quarter-end month).
* Missing values inside an aligned panel are NaN; a NaN is an absent marker,
  never a numeric sentinel.
* Each series carries announcement metadata (lag in months plus a day of the
  announcement month, or ``"daily"`` for continuously available data).  An
  observation for period month ``m`` enters the information set once
  ``as_of >= release_date(m)``.
"""
from __future__ import annotations

import calendar as _cal
import enum
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Iterable, Mapping

import numpy as np


class DataError(ValueError):
    """Malformed or insufficient input data."""


class ConfigError(ValueError):
    """Invalid configuration value; message names the offending field."""


class Frequency(enum.Enum):
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"
    QUARTERLY = "quarterly"


#: periods per year used by the positional year-over-year shift.  Daily uses
#: the 30-day-month convention (12 * 30).
PERIODS_PER_YEAR = {
    Frequency.DAILY: 360,
    Frequency.WEEKLY: 52,
    Frequency.MONTHLY: 12,
    Frequency.QUARTERLY: 4,
}

DAILY_ANNOUNCE = "daily"

KINDS = ("hard", "soft", "bigdata")
TRANSFORMS = ("level", "yoy_growth", "ann_13w_growth")


# ---------------------------------------------------------------------------
# calendar helpers


def month_index(d: date) -> int:
    """Months since year 0: year*12 + (month-1)."""
    return d.year * 12 + d.month - 1


def month_first_day(mi: int) -> date:
    return date(mi // 12, mi % 12 + 1, 1)


def month_last_day(mi: int) -> date:
    y, m = mi // 12, mi % 12 + 1
    return date(y, m, _cal.monthrange(y, m)[1])


def clamp_day(mi: int, day: int) -> date:
    """Date in month ``mi`` with the day clamped to the month length."""
    y, m = mi // 12, mi % 12 + 1
    return date(y, m, min(day, _cal.monthrange(y, m)[1]))


def quarter_index(d: date) -> int:
    return month_index(d) // 3


def quarter_of_month(mi: int) -> int:
    return mi // 3


def quarter_months(qi: int) -> tuple[int, int, int]:
    return (qi * 3, qi * 3 + 1, qi * 3 + 2)


def quarter_end_month(qi: int) -> int:
    return qi * 3 + 2


def quarter_label(qi: int) -> str:
    return f"{qi // 4}Q{qi % 4 + 1}"


def parse_quarter(label: str) -> int:
    try:
        year, q = label.strip().upper().split("Q")
        qi = int(year) * 4 + int(q) - 1
        if not 1 <= int(q) <= 4:
            raise ValueError
    except ValueError as exc:
        raise ConfigError(f"bad quarter label {label!r}, expected e.g. 2018Q1") from exc
    return qi


# ---------------------------------------------------------------------------
# core types


@dataclass(frozen=True)
class TimeSeries:
    """An ordered, dated series of float values.

    ``values`` may contain NaN where a date is present but the value is
    absent; non-NaN values must be finite.  Dates are strictly increasing and
    monthly/quarterly series carry one observation per period, dated at the
    period end for aligned panels (loaders accept any day within the period).
    """

    name: str
    freq: Frequency
    dates: tuple[date, ...]
    values: np.ndarray
    units: str = "level"

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != len(vals):
            raise DataError(f"{self.name}: {len(self.dates)} dates vs {len(vals)} values")
        for a, b in zip(self.dates, self.dates[1:]):
            if a >= b:
                raise DataError(f"{self.name}: dates not strictly increasing at {b}")
        finite = np.isfinite(vals) | np.isnan(vals)
        if not finite.all():
            bad = self.dates[int(np.argmin(finite))]
            raise DataError(f"{self.name}: non-finite value at {bad}")
        if self.freq is Frequency.QUARTERLY:
            for d in self.dates:
                if d.month % 3 != 0:
                    raise DataError(f"{self.name}: quarterly date {d} not in a quarter-end month")
        if self.freq in (Frequency.MONTHLY, Frequency.QUARTERLY):
            seen: set[int] = set()
            for d in self.dates:
                mi = month_index(d)
                if mi in seen:
                    raise DataError(f"{self.name}: duplicate observation in month of {d}")
                seen.add(mi)
        vals.setflags(write=False)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def last_observed_date(self) -> date | None:
        obs = self.observed
        if not obs.any():
            return None
        return self.dates[int(np.max(np.nonzero(obs)[0]))]

    def select(self, keep: np.ndarray) -> "TimeSeries":
        """New series with only the rows where ``keep`` is True."""
        keep = np.asarray(keep, dtype=bool)
        dates = tuple(d for d, k in zip(self.dates, keep) if k)
        return TimeSeries(self.name, self.freq, dates, self.values[keep], self.units)


@dataclass(frozen=True)
class SeriesMeta:
    """Kind, native frequency, transform, and announcement calendar of a series."""

    name: str
    kind: str
    freq: Frequency
    transform: str
    announce_lag_months: int
    announce_day: int | str
    target: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"{self.name}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.transform not in TRANSFORMS:
            raise ConfigError(
                f"{self.name}: transform must be one of {TRANSFORMS}, got {self.transform!r}"
            )
        if self.announce_lag_months < 0:
            raise ConfigError(f"{self.name}: announce_lag_months must be >= 0")
        day = self.announce_day
        if day == DAILY_ANNOUNCE:
            if self.announce_lag_months != 0:
                raise ConfigError(f"{self.name}: daily announcement requires zero lag")
            if self.kind != "bigdata" and self.freq is not Frequency.DAILY:
                raise ConfigError(f"{self.name}: daily announcement requires daily data")
        elif isinstance(day, int):
            if not 1 <= day <= 31:
                raise ConfigError(f"{self.name}: announce_day must be in 1..31")
        else:
            raise ConfigError(f"{self.name}: announce_day must be an int or 'daily'")


def release_date(meta: SeriesMeta, period_month: int) -> date:
    """Release date of the observation for period month ``period_month``.

    Day counts are clamped to the month length (a day-30 announcement in
    February releases on the 28th/29th).
    """
    if meta.announce_day == DAILY_ANNOUNCE:
        return month_first_day(period_month)
    return clamp_day(period_month + meta.announce_lag_months, int(meta.announce_day))


def target_release_date(meta: SeriesMeta, qi: int) -> date:
    """Release date of the target value for quarter ``qi``."""
    return release_date(meta, quarter_end_month(qi))


# ---------------------------------------------------------------------------
# transforms


def _require_contiguous(s: TimeSeries) -> None:
    step = 1 if s.freq is Frequency.MONTHLY else 3
    idx = [month_index(d) for d in s.dates]
    for a, b in zip(idx, idx[1:]):
        if b - a != step:
            raise DataError(f"{s.name}: gap in {s.freq.value} dates before {month_first_day(b)}")


def yoy_growth(s: TimeSeries) -> TimeSeries:
    """Year-over-year growth 100*(v_t / v_{t-k} - 1), k periods per year.

    The shift is positional, so monthly/quarterly series must be contiguous.
    Bases must be strictly positive; NaN in the value or base yields NaN.
    """
    k = PERIODS_PER_YEAR[s.freq]
    if len(s) <= k:
        raise DataError(f"{s.name}: need more than {k} observations for yoy growth")
    if s.freq in (Frequency.MONTHLY, Frequency.QUARTERLY):
        _require_contiguous(s)
    base = s.values[:-k]
    cur = s.values[k:]
    bad = ~np.isnan(base) & (base <= 0)
    if bad.any():
        when = s.dates[int(np.argmax(bad))]
        raise DataError(f"{s.name}: non-positive base value at {when}")
    out = 100.0 * (cur / base - 1.0)
    return TimeSeries(s.name, s.freq, s.dates[k:], out, units="percent")


def ann_13w_growth(s: TimeSeries) -> TimeSeries:
    """Annualized 13-week growth 100*((v_t / v_{t-13})^4 - 1) for weekly data."""
    if s.freq is not Frequency.WEEKLY:
        raise DataError(f"{s.name}: ann_13w_growth applies to weekly series")
    if len(s) <= 13:
        raise DataError(f"{s.name}: need more than 13 observations")
    base = s.values[:-13]
    cur = s.values[13:]
    bad = ~np.isnan(base) & (base <= 0)
    if bad.any():
        when = s.dates[int(np.argmax(bad))]
        raise DataError(f"{s.name}: non-positive base value at {when}")
    out = 100.0 * ((cur / base) ** 4 - 1.0)
    return TimeSeries(s.name, s.freq, s.dates[13:], out, units="percent")


def _group_by_month(s: TimeSeries) -> dict[int, list[float]]:
    groups: dict[int, list[float]] = {}
    for d, v in zip(s.dates, s.values):
        if np.isnan(v):
            continue
        groups.setdefault(month_index(d), []).append(float(v))
    return groups


def to_quarterly(s: TimeSeries) -> TimeSeries:
    """Quarterly means of the available monthly observations.

    Quarters with no observed month are absent from the output.
    """
    if s.freq is not Frequency.MONTHLY:
        raise DataError(f"{s.name}: to_quarterly expects a monthly series")
    groups: dict[int, list[float]] = {}
    for d, v in zip(s.dates, s.values):
        if np.isnan(v):
            continue
        groups.setdefault(quarter_index(d), []).append(float(v))
    quarters = sorted(groups)
    dates = tuple(month_last_day(quarter_end_month(q)) for q in quarters)
    vals = np.array([np.mean(groups[q]) for q in quarters])
    return TimeSeries(s.name, Frequency.QUARTERLY, dates, vals, s.units)


def weekly_to_monthly_last(s: TimeSeries) -> TimeSeries:
    """Monthly series from the last weekly observation of each month."""
    if s.freq is not Frequency.WEEKLY:
        raise DataError(f"{s.name}: weekly_to_monthly_last expects a weekly series")
    last: dict[int, float] = {}
    for d, v in zip(s.dates, s.values):
        if not np.isnan(v):
            last[month_index(d)] = float(v)
    months = sorted(last)
    dates = tuple(month_last_day(mi) for mi in months)
    return TimeSeries(s.name, Frequency.MONTHLY, dates, np.array([last[m] for m in months]), s.units)


def daily_to_monthly_mean(s: TimeSeries) -> TimeSeries:
    """Monthly means over whatever days are available (partial months included)."""
    if s.freq is not Frequency.DAILY:
        raise DataError(f"{s.name}: daily_to_monthly_mean expects a daily series")
    groups = _group_by_month(s)
    months = sorted(groups)
    dates = tuple(month_last_day(mi) for mi in months)
    vals = np.array([np.mean(groups[m]) for m in months])
    return TimeSeries(s.name, Frequency.MONTHLY, dates, vals, s.units)


def apply_transform(s: TimeSeries, meta: SeriesMeta) -> TimeSeries:
    """Apply the configured growth transform, then reduce to monthly/quarterly."""
    if meta.transform == "yoy_growth":
        s = yoy_growth(s)
    elif meta.transform == "ann_13w_growth":
        s = ann_13w_growth(s)
    if s.freq is Frequency.WEEKLY:
        s = weekly_to_monthly_last(s)
    elif s.freq is Frequency.DAILY:
        s = daily_to_monthly_mean(s)
    return s


# ---------------------------------------------------------------------------
# panels and vintages


@dataclass(frozen=True)
class PanelDataset:
    """Aligned monthly indicators plus the quarterly target.

    Indicators share one monthly grid (NaN where unobserved) and, after
    ``standardize_panel``, have mean 0 / population sd 1 over their observed
    entries; ``scaling`` maps each name to the (mean, sd) used so model
    output can be mapped back.  The target stays in percent units.
    """

    indicators: tuple[TimeSeries, ...]
    target: TimeSeries
    meta: Mapping[str, SeriesMeta]
    as_of: date
    scaling: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.indicators)

    @property
    def start_month(self) -> int:
        return month_index(self.indicators[0].dates[0])

    @property
    def end_month(self) -> int:
        return month_index(self.indicators[0].dates[-1])

    def matrix(self) -> np.ndarray:
        """(T, n) indicator matrix on the shared monthly grid."""
        return np.column_stack([s.values for s in self.indicators])

    def target_by_quarter(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for d, v in zip(self.target.dates, self.target.values):
            if not np.isnan(v):
                out[quarter_index(d)] = float(v)
        return out


@dataclass(frozen=True)
class VintageView:
    """Everything a model may see at one point in pseudo-real time."""

    panel: PanelDataset
    raw: Mapping[str, TimeSeries]
    ragged_tail: Mapping[str, int]
    head_missing: Mapping[str, int]
    dropped: tuple[str, ...] = ()


def standardize_panel(panel: PanelDataset) -> tuple[PanelDataset, dict[str, tuple[float, float]]]:
    """Standardize each indicator to mean 0 / population sd 1.

    Returns the new panel and the per-series (mean, sd) moments.  Raises
    DataError for series with fewer than two observations or zero variance.
    """
    moments: dict[str, tuple[float, float]] = {}
    out = []
    for s in panel.indicators:
        vals = s.values
        obs = vals[~np.isnan(vals)]
        if obs.size < 2:
            raise DataError(f"{s.name}: need at least 2 observations to standardize")
        mean = float(np.mean(obs))
        sd = float(np.std(obs))
        if sd <= 1e-12:
            raise DataError(f"{s.name}: zero variance, cannot standardize")
        moments[s.name] = (mean, sd)
        out.append(TimeSeries(s.name, s.freq, s.dates, (vals - mean) / sd, s.units))
    new = PanelDataset(tuple(out), panel.target, panel.meta, panel.as_of, moments)
    return new, moments


def _truncate_for_vintage(s: TimeSeries, meta: SeriesMeta, as_of: date) -> TimeSeries:
    if len(s) == 0:
        return s
    if meta.announce_day == DAILY_ANNOUNCE:
        keep = np.array([d <= as_of for d in s.dates])
    else:
        keep = np.array([release_date(meta, month_index(d)) <= as_of for d in s.dates])
    return s.select(keep)


def _monthly_on_grid(s: TimeSeries, start: int, end: int) -> TimeSeries:
    vals = np.full(end - start + 1, np.nan)
    for d, v in zip(s.dates, s.values):
        mi = month_index(d)
        if start <= mi <= end:
            vals[mi - start] = v
    dates = tuple(month_last_day(mi) for mi in range(start, end + 1))
    return TimeSeries(s.name, Frequency.MONTHLY, dates, vals, s.units)


def assemble_panel(
    truncated: Mapping[str, TimeSeries],
    meta: Mapping[str, SeriesMeta],
    as_of: date,
) -> VintageView:
    """Transform truncated raw series, align them on a monthly grid, standardize.

    Series whose transformed history is too short to standardize are dropped
    (recorded in ``VintageView.dropped``).
    """
    target_names = [n for n, m in meta.items() if m.target]
    if len(target_names) != 1:
        raise DataError(f"expected exactly one target series, found {target_names}")
    target_name = target_names[0]

    monthly: list[TimeSeries] = []
    dropped: list[str] = []
    for name, s in truncated.items():
        if name == target_name:
            continue
        if len(s) == 0:
            dropped.append(name)
            continue
        t = apply_transform(s, meta[name])
        if int(np.sum(~np.isnan(t.values))) < 2 or float(np.std(t.values[~np.isnan(t.values)])) <= 1e-12:
            dropped.append(name)
            continue
        monthly.append(t)
    if not monthly:
        raise DataError(f"no usable indicator series at {as_of}")

    start = min(month_index(t.dates[0]) for t in monthly)
    end = month_index(as_of)
    aligned = tuple(_monthly_on_grid(t, start, end) for t in monthly)

    raw_target = truncated[target_name]
    tmeta = meta[target_name]
    if len(raw_target) == 0:
        raise DataError(f"target {target_name} has no released observations at {as_of}")
    target = apply_transform(raw_target, tmeta)
    if target.freq is not Frequency.QUARTERLY:
        raise DataError(f"target {target_name} must be quarterly after transform")

    ragged: dict[str, int] = {}
    head: dict[str, int] = {}
    for s in aligned:
        obs = np.nonzero(~np.isnan(s.values))[0]
        ragged[s.name] = len(s.values) - 1 - int(obs[-1])
        head[s.name] = int(obs[0])

    panel = PanelDataset(aligned, target, dict(meta), as_of)
    panel, _ = standardize_panel(panel)
    return VintageView(panel, dict(truncated), ragged, head, tuple(sorted(dropped)))


def vintage_at(
    series: Mapping[str, TimeSeries],
    meta: Mapping[str, SeriesMeta],
    as_of: date,
) -> VintageView:
    """Information set at ``as_of`` under the announcement calendar.

    Monthly-announced observations for period month m enter once
    day ``announce_day`` of month ``m + announce_lag_months`` has passed;
    daily-announced series are included through ``as_of`` itself.  The
    quarterly target follows the same rule keyed on its quarter-end month.
    """
    missing = sorted(set(series) - set(meta))
    if missing:
        raise DataError(f"series without metadata: {missing}")
    unknown = sorted(set(meta) - set(series))
    if unknown:
        raise DataError(f"metadata for unknown series: {unknown}")
    truncated = {name: _truncate_for_vintage(s, meta[name], as_of) for name, s in series.items()}
    return assemble_panel(truncated, meta, as_of)
