"""Synthetic mixed-frequency economies with known ground truth.

A single AR(1) activity factor drives monthly indicator growth, weekly loan
growth, daily spending proxies, and the latent monthly target whose
three-month average is the quarterly target.  Indicators that are observed
as year-over-year growth in real data are emitted here as *levels* built so
that the growth transform recovers the simulated growth path exactly.

``gen_transactions`` builds transaction records whose filtered monthly sums
reproduce given nominal growth targets to float precision, plus optional
planted records that each violate exactly one filter rule.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace

import numpy as np

from .dataio import TransactionRecord
from .series import (
    DAILY_ANNOUNCE,
    DataError,
    Frequency,
    SeriesMeta,
    TimeSeries,
    clamp_day,
    month_index,
    month_last_day,
    quarter_end_month,
    quarter_of_month,
)
from .txnindex import CONSUMPTION_CHANNELS, PURPOSES, default_mapping


@dataclass(frozen=True)
class IndicatorDef:
    """One simulated series: calendar metadata plus factor loading and noise."""

    name: str
    kind: str
    freq: Frequency
    transform: str
    lag: int
    day: int | str
    loading: float
    mean: float
    noise_sd: float


DEFAULT_INDICATORS: tuple[IndicatorDef, ...] = (
    IndicatorDef("ip", "hard", Frequency.MONTHLY, "yoy_growth", 2, 13, 1.0, 3.0, 0.8),
    IndicatorDef("car_imports", "hard", Frequency.MONTHLY, "yoy_growth", 2, 15, 1.4, 4.0, 2.2),
    IndicatorDef("nonmetallic_minerals", "hard", Frequency.MONTHLY, "yoy_growth", 2, 13, 0.9, 3.0, 1.4),
    IndicatorDef("car_sales", "hard", Frequency.MONTHLY, "yoy_growth", 2, 15, 1.2, 4.0, 2.0),
    IndicatorDef("electricity", "hard", Frequency.MONTHLY, "yoy_growth", 0, 30, 0.7, 2.5, 1.0),
    IndicatorDef("employment", "hard", Frequency.MONTHLY, "yoy_growth", 3, 12, 0.4, 2.0, 0.6),
    IndicatorDef("unemployment", "hard", Frequency.MONTHLY, "yoy_growth", 3, 12, -0.8, 1.0, 1.5),
    IndicatorDef("car_exports", "hard", Frequency.MONTHLY, "yoy_growth", 2, 15, 1.0, 5.0, 2.5),
    IndicatorDef("pmi", "soft", Frequency.MONTHLY, "level", 1, 1, 4.0, 50.0, 3.5),
    IndicatorDef("confidence", "soft", Frequency.MONTHLY, "level", 0, 26, 6.0, 100.0, 8.0),
    IndicatorDef("loans_13w", "soft", Frequency.WEEKLY, "ann_13w_growth", 1, 10, 0.9, 9.0, 2.0),
    IndicatorDef("bigdata_consumption", "bigdata", Frequency.DAILY, "level", 0, DAILY_ANNOUNCE, 1.1, 5.0, 0.9),
    IndicatorDef("bigdata_investment", "bigdata", Frequency.DAILY, "level", 0, DAILY_ANNOUNCE, 1.4, 6.0, 1.1),
)

TARGET_NAME = "gdp"
TARGET_LAG_MONTHS = 3
TARGET_ANNOUNCE_DAY = 10


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for the simulated economy."""

    n_years: int = 9
    start_year: int = 2011
    factor_ar: float = 0.8
    factor_sd: float = 0.6
    idio_ar: float = 0.3
    gdp_mean: float = 4.0
    gdp_loading: float = 1.8
    gdp_noise_sd: float = 0.35
    daily_noise_sd: float = 0.5
    include_bigdata: bool = True
    indicators: tuple[IndicatorDef, ...] = DEFAULT_INDICATORS

    def __post_init__(self) -> None:
        if self.n_years < 2:
            raise DataError("need at least two years of data")
        if abs(self.factor_ar) >= 1 or abs(self.idio_ar) >= 1:
            raise DataError("factor and idiosyncratic AR coefficients must be stationary")
        if self.factor_sd <= 0:
            raise DataError("factor innovation sd must be positive")

    @property
    def active_indicators(self) -> tuple[IndicatorDef, ...]:
        if self.include_bigdata:
            return self.indicators
        return tuple(d for d in self.indicators if d.kind != "bigdata")


@dataclass(frozen=True)
class SynthData:
    series: dict[str, TimeSeries]
    meta: dict[str, SeriesMeta]
    truth: dict


def default_meta(spec: SynthSpec | None = None) -> dict[str, SeriesMeta]:
    """Announcement calendar for every simulated series, target included."""
    spec = spec or SynthSpec()
    meta = {
        d.name: SeriesMeta(d.name, d.kind, d.freq, d.transform, d.lag, d.day)
        for d in spec.active_indicators
    }
    meta[TARGET_NAME] = SeriesMeta(
        TARGET_NAME, "hard", Frequency.QUARTERLY, "level",
        TARGET_LAG_MONTHS, TARGET_ANNOUNCE_DAY, target=True,
    )
    return meta


def _ar1_path(rng: np.random.Generator, n: int, phi: float, sd: float) -> np.ndarray:
    """Stationary AR(1) with unconditional standard deviation ``sd``."""
    x = np.empty(n)
    innov_sd = sd * np.sqrt(max(1.0 - phi * phi, 1e-12))
    x[0] = rng.normal(0.0, sd)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + rng.normal(0.0, innov_sd)
    return x


def _growth_to_levels(growth: np.ndarray, base: float, per_year: int) -> np.ndarray:
    """Levels whose yoy transform reproduces ``growth``; prepends one base year."""
    levels = np.empty(per_year + growth.size)
    for j in range(per_year):
        levels[j] = base * (1.0 + 0.002 * j)
    factors = 1.0 + growth / 100.0
    if (factors <= 0).any():
        t = int(np.argmax(factors <= 0))
        raise DataError(f"growth {growth[t]:.2f}% at step {t} implies a non-positive level")
    for t in range(growth.size):
        levels[per_year + t] = levels[t] * factors[t]
    return levels


def _weekly_dates(first: dt.date, last: dt.date) -> tuple[dt.date, ...]:
    # Mondays covering [first, last]
    start = first + dt.timedelta(days=(7 - first.weekday()) % 7)
    out = []
    d = start
    while d <= last:
        out.append(d)
        d += dt.timedelta(days=7)
    return tuple(out)


def gen_factor_panel(spec: SynthSpec | None = None, seed: int = 0) -> SynthData:
    """Simulate the full dataset plus the latent paths behind it."""
    spec = spec or SynthSpec()
    rng = np.random.default_rng(seed)
    T = 12 * spec.n_years
    mi0 = month_index(dt.date(spec.start_year, 1, 1))
    months = np.arange(mi0, mi0 + T)

    factor = _ar1_path(rng, T, spec.factor_ar, spec.factor_sd)
    series: dict[str, TimeSeries] = {}
    truth: dict = {
        "factor": factor,
        "start_month": mi0,
        "n_months": T,
        "indicator_growth": {},
        "loadings": {},
    }

    monthly_dates = tuple(month_last_day(mi) for mi in months)
    for d in spec.active_indicators:
        idio = _ar1_path(rng, T, spec.idio_ar, d.noise_sd)
        signal = d.mean + d.loading * factor + idio
        truth["indicator_growth"][d.name] = signal
        truth["loadings"][d.name] = d.loading
        if d.transform == "yoy_growth":
            levels = _growth_to_levels(signal, 100.0, 12)
            dates = tuple(month_last_day(mi) for mi in range(mi0 - 12, mi0 + T))
            series[d.name] = TimeSeries(d.name, Frequency.MONTHLY, dates, levels)
        elif d.transform == "ann_13w_growth":
            series[d.name] = _weekly_series(rng, d, signal, mi0)
        elif d.freq is Frequency.DAILY:
            series[d.name] = _daily_series(rng, d, signal, mi0, spec.daily_noise_sd)
        else:  # monthly level series (surveys)
            series[d.name] = TimeSeries(d.name, Frequency.MONTHLY, monthly_dates, signal, "index")

    monthly_target = spec.gdp_mean + spec.gdp_loading * factor + rng.normal(
        0.0, spec.gdp_noise_sd, T
    )
    truth["monthly_target"] = monthly_target
    quarters = sorted({quarter_of_month(mi) for mi in months})
    qvals: dict[int, float] = {}
    for q in quarters:
        m1 = 3 * q
        if m1 >= mi0 and m1 + 2 < mi0 + T:
            sel = monthly_target[m1 - mi0 : m1 - mi0 + 3]
            qvals[q] = float(sel.mean())
    truth["quarterly"] = qvals
    qs = sorted(qvals)
    series[TARGET_NAME] = TimeSeries(
        TARGET_NAME,
        Frequency.QUARTERLY,
        tuple(month_last_day(quarter_end_month(q)) for q in qs),
        np.array([qvals[q] for q in qs]),
        "percent",
    )
    return SynthData(series, default_meta(spec), truth)


def _weekly_series(
    rng: np.random.Generator, d: IndicatorDef, signal: np.ndarray, mi0: int
) -> TimeSeries:
    """Weekly levels whose annualized 13-week growth tracks the monthly signal."""
    T = signal.size
    dates = _weekly_dates(month_last_day(mi0 - 5), month_last_day(mi0 + T - 1))
    growth = np.empty(len(dates))
    for j, w in enumerate(dates):
        t = min(max(month_index(w) - mi0, 0), T - 1)
        growth[j] = signal[t] + rng.normal(0.0, 0.4)
    levels = np.empty(len(dates))
    for j in range(13):
        levels[j] = 100.0 * (1.0 + 0.001 * j)
    for j in range(13, len(dates)):
        g = 1.0 + growth[j] / 100.0
        if g <= 0:
            raise DataError(f"{d.name}: growth {growth[j]:.2f}% implies a non-positive level")
        levels[j] = levels[j - 13] * g ** 0.25
    return TimeSeries(d.name, Frequency.WEEKLY, dates, levels)


def _daily_series(
    rng: np.random.Generator, d: IndicatorDef, signal: np.ndarray, mi0: int, noise_sd: float
) -> TimeSeries:
    """Daily values interpolating mid-month anchors of the monthly signal."""
    T = signal.size
    anchors_x = np.arange(T) + 0.5
    dates: list[dt.date] = []
    pos: list[float] = []
    for t in range(T):
        ndays = month_last_day(mi0 + t).day
        for day in range(1, ndays + 1):
            dates.append(clamp_day(mi0 + t, day))
            pos.append(t + (day - 0.5) / ndays)
    vals = np.interp(np.array(pos), anchors_x, signal)
    vals = vals + rng.normal(0.0, noise_sd, vals.size)
    return TimeSeries(d.name, Frequency.DAILY, tuple(dates), vals, "percent")


# ---------------------------------------------------------------------------
# transactions

VIOLATION_RULES = {
    "consumption": ("wrong_payer", "wrong_channel"),
    "investment": ("wrong_channel", "wrong_payer", "inactive_firm", "missing_city", "unmapped_sector"),
}


def _clean_record(
    purpose: str, bucket: str, codes: list[str], date: dt.date, i: int, amount: float
) -> TransactionRecord:
    if purpose == "consumption":
        return TransactionRecord(
            date, "individual", CONSUMPTION_CHANNELS[i % len(CONSUMPTION_CHANNELS)],
            codes[i % len(codes)], 1 + i % 81, True, amount,
        )
    channel = "house_purchase" if bucket == "construction" and i % 5 == 0 else "transfer"
    code = "house" if channel == "house_purchase" else codes[i % len(codes)]
    return TransactionRecord(date, "firm", channel, code, 1 + i % 81, True, amount)


def _planted_record(purpose: str, rule: str, date: dt.date, amount: float) -> TransactionRecord:
    base = (
        TransactionRecord(date, "individual", "pos", "grocery", 5, True, amount)
        if purpose == "consumption"
        else TransactionRecord(date, "firm", "transfer", "machinery_mfg", 5, True, amount)
    )
    if rule == "wrong_payer":
        return replace(base, payer="firm" if purpose == "consumption" else "individual")
    if rule == "wrong_channel":
        return replace(base, channel="transfer" if purpose == "consumption" else "pos")
    if rule == "inactive_firm":
        return replace(base, active=False)
    if rule == "missing_city":
        return replace(base, city=0)
    if rule == "unmapped_sector":
        return replace(base, sector_code="unknown_sector")
    raise DataError(f"unknown violation rule {rule!r}")


def gen_transactions(
    targets: dict[str, TimeSeries],
    purpose: str,
    seed: int = 0,
    n_per_month: int = 40,
    base_level: float = 1e6,
    violations: dict[str, int] | None = None,
) -> tuple[list[TransactionRecord], dict]:
    """Records whose kept monthly bucket sums reproduce the growth targets.

    ``targets`` maps bucket name to a monthly nominal yoy-growth series (in
    percent).  One presample year of levels is prepended per bucket so the
    growth is recoverable on exactly the target months.  ``violations`` maps
    filter-rule names to counts of planted records, each violating only that
    rule; the manifest echoes those counts for verification.
    """
    if purpose not in PURPOSES:
        raise DataError(f"purpose must be one of {PURPOSES}, got {purpose!r}")
    mapping = default_mapping(purpose)
    rng = np.random.default_rng(seed)
    records: list[TransactionRecord] = []
    bucket_sums: dict[str, dict[int, float]] = {}

    for bucket, ts in sorted(targets.items()):
        codes = sorted(c for c, b in mapping.items() if b == bucket)
        if not codes:
            raise DataError(f"no {purpose} sector codes map to bucket {bucket!r}")
        months = [month_index(dd) for dd in ts.dates]
        if months != list(range(months[0], months[0] + len(months))):
            raise DataError(f"{bucket}: target months must be contiguous")
        levels = _growth_to_levels(np.asarray(ts.values, dtype=float), base_level, 12)
        all_months = list(range(months[0] - 12, months[0] + len(months)))
        bucket_sums[bucket] = dict(zip(all_months, levels.tolist()))
        for mi, total in bucket_sums[bucket].items():
            shares = rng.dirichlet(np.ones(n_per_month))
            ndays = month_last_day(mi).day
            for i in range(n_per_month):
                date = clamp_day(mi, 1 + (i * ndays) // n_per_month)
                records.append(
                    _clean_record(purpose, bucket, codes, date, i, float(total * shares[i]))
                )

    n_clean = len(records)
    planted = dict(violations or {})
    allowed = VIOLATION_RULES[purpose]
    plant_months = sorted({month_index(dd) for ts in targets.values() for dd in ts.dates})
    for rule, count in sorted(planted.items()):
        if rule not in allowed:
            raise DataError(f"rule {rule!r} is not a {purpose} filter rule (use {allowed})")
        if count < 0:
            raise DataError(f"negative planted count for rule {rule!r}")
        for j in range(count):
            date = clamp_day(plant_months[j % len(plant_months)], 15)
            records.append(_planted_record(purpose, rule, date, base_level * 1e-4))

    rng.shuffle(records)
    manifest = {
        "purpose": purpose,
        "n_clean": n_clean,
        "planted": planted,
        "bucket_sums": bucket_sums,
    }
    return records, manifest


INDEX_BUCKETS = {"consumption": ("goods", "services"), "investment": ("machinery", "construction")}
_BUCKET_OFFSETS = {"goods": 0.5, "services": -0.5, "machinery": 0.8, "construction": -0.8}


def index_targets(
    data: SynthData, purpose: str, inflation: float = 8.0
) -> dict[str, TimeSeries]:
    """Nominal per-bucket growth targets implied by a simulated economy.

    Buckets move with the matching big-data proxy's monthly growth (offset
    symmetrically so the equal-weight average is the proxy path itself),
    re-inflated by a constant deflator.  Feeding the result through
    ``gen_transactions`` and the index pipeline recovers the proxy growth.
    """
    if purpose not in INDEX_BUCKETS:
        raise DataError(f"purpose must be one of {PURPOSES}, got {purpose!r}")
    name = f"bigdata_{purpose}"
    if name not in data.truth["indicator_growth"]:
        raise DataError(f"economy was generated without {name}")
    real = data.truth["indicator_growth"][name]
    mi0 = data.truth["start_month"]
    dates = tuple(month_last_day(mi0 + t) for t in range(real.size))
    out: dict[str, TimeSeries] = {}
    for bucket in INDEX_BUCKETS[purpose]:
        r = real + _BUCKET_OFFSETS[bucket]
        nominal = 100.0 * ((1.0 + r / 100.0) * (1.0 + inflation / 100.0) - 1.0)
        out[bucket] = TimeSeries(f"{purpose}_{bucket}", Frequency.MONTHLY, dates, nominal, "percent")
    return out
