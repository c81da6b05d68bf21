"""Consumption and investment activity indices from transaction records.

Pipeline: filter records by purpose-specific rules, group into sector
buckets, sum amounts per month, take nominal year-over-year growth, deflate
by the exact ratio, and combine buckets with share weights.

Filter rules (checked in the listed order; a record is charged to the first
rule it fails):

* consumption — payer must be an individual; channel must be one of
  pos / ecommerce / mail_phone.
* investment — channel must be transfer or house_purchase; payer must be a
  firm; the firm must be active; the debtor city must be identified
  (city > 0); the sector must map to a machinery/construction bucket
  (house-purchase transfers skip the sector rule and land in construction).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import TransactionRecord
from .series import DataError, Frequency, TimeSeries, month_index, month_last_day, yoy_growth

PURPOSES = ("consumption", "investment")
CONSUMPTION_CHANNELS = ("pos", "ecommerce", "mail_phone")
INVESTMENT_CHANNELS = ("transfer", "house_purchase")
HOUSE_PURCHASE_BUCKET = "construction"

#: synthetic MCC-like consumption codes -> goods/services buckets
DEFAULT_CONSUMPTION_MAP = {
    "grocery": "goods",
    "fuel": "goods",
    "electronics": "goods",
    "clothing": "goods",
    "restaurants": "services",
    "travel": "services",
    "health": "services",
    "entertainment": "services",
}
#: synthetic NACE-like investment codes -> machinery/construction buckets
DEFAULT_INVESTMENT_MAP = {
    "machinery_mfg": "machinery",
    "equipment_wholesale": "machinery",
    "vehicles_commercial": "machinery",
    "construction_materials": "construction",
    "building_construction": "construction",
    "civil_engineering": "construction",
}


def default_mapping(purpose: str) -> dict[str, str]:
    if purpose == "consumption":
        return dict(DEFAULT_CONSUMPTION_MAP)
    if purpose == "investment":
        return dict(DEFAULT_INVESTMENT_MAP)
    raise DataError(f"purpose must be one of {PURPOSES}, got {purpose!r}")


@dataclass(frozen=True)
class FilterReport:
    purpose: str
    n_input: int
    n_kept: int
    excluded: dict[str, int]  # rule name -> count


def filter_transactions(
    records, purpose: str, mapping: dict[str, str] | None = None
) -> tuple[list[TransactionRecord], FilterReport]:
    if purpose not in PURPOSES:
        raise DataError(f"purpose must be one of {PURPOSES}, got {purpose!r}")
    if mapping is None:
        mapping = default_mapping(purpose)
    kept: list[TransactionRecord] = []
    excluded: dict[str, int] = {}

    def reject(rule: str) -> None:
        excluded[rule] = excluded.get(rule, 0) + 1

    for r in records:
        if purpose == "consumption":
            if r.payer != "individual":
                reject("wrong_payer")
            elif r.channel not in CONSUMPTION_CHANNELS:
                reject("wrong_channel")
            else:
                kept.append(r)
        else:
            if r.channel not in INVESTMENT_CHANNELS:
                reject("wrong_channel")
            elif r.payer != "firm":
                reject("wrong_payer")
            elif not r.active:
                reject("inactive_firm")
            elif r.city <= 0:
                reject("missing_city")
            elif r.channel != "house_purchase" and r.sector_code not in mapping:
                reject("unmapped_sector")
            else:
                kept.append(r)
    n_input = len(kept) + sum(excluded.values())
    return kept, FilterReport(purpose, n_input, len(kept), excluded)


def winsorize_amounts(
    records, lower: float = 0.5, upper: float = 99.5
) -> list[TransactionRecord]:
    """Clip amounts at the given percentiles, month by month."""
    if not 0 <= lower < upper <= 100:
        raise DataError(f"bad percentile limits ({lower}, {upper})")
    by_month: dict[int, list[TransactionRecord]] = {}
    for r in records:
        by_month.setdefault(month_index(r.date), []).append(r)
    out: list[TransactionRecord] = []
    for mi in sorted(by_month):
        amts = np.array([r.amount for r in by_month[mi]])
        lo, hi = np.percentile(amts, [lower, upper])
        for r in by_month[mi]:
            a = float(min(max(r.amount, lo), hi))
            out.append(r if a == r.amount else TransactionRecord(
                r.date, r.payer, r.channel, r.sector_code, r.city, r.active, a
            ))
    return out


def aggregate_by_sector(
    records, mapping: dict[str, str]
) -> dict[str, dict[int, float]]:
    """Monthly nominal sums per bucket; unmapped sector codes are an error."""
    sums: dict[str, dict[int, float]] = {}
    unmapped: set[str] = set()
    for r in records:
        if r.channel == "house_purchase":
            bucket = HOUSE_PURCHASE_BUCKET
        elif r.sector_code in mapping:
            bucket = mapping[r.sector_code]
        else:
            unmapped.add(r.sector_code)
            continue
        mi = month_index(r.date)
        sums.setdefault(bucket, {})
        sums[bucket][mi] = sums[bucket].get(mi, 0.0) + r.amount
    if unmapped:
        raise DataError(f"unmapped sector codes: {sorted(unmapped)}")
    return sums


@dataclass(frozen=True)
class IndexSeries:
    name: str
    bucket_nominal: dict[str, TimeSeries]  # monthly sums, level units
    bucket_growth: dict[str, TimeSeries]  # real yoy growth, percent
    combined: TimeSeries  # weighted real growth, percent
    weights: dict[str, dict[int, float]]  # bucket -> month -> weight


def _sums_to_series(name: str, sums: dict[int, float]) -> TimeSeries:
    months = sorted(sums)
    if not months:
        raise DataError(f"{name}: no monthly sums")
    if months != list(range(months[0], months[-1] + 1)):
        raise DataError(f"{name}: monthly sums have gaps")
    dates = tuple(month_last_day(mi) for mi in months)
    return TimeSeries(name, Frequency.MONTHLY, dates, np.array([sums[m] for m in months]))


def _deflator_at(deflators, bucket: str, mi: int) -> float:
    if isinstance(deflators, (int, float)):
        return float(deflators)
    if isinstance(deflators, dict):
        deflators = deflators[bucket]
    for d, v in zip(deflators.dates, deflators.values):
        if month_index(d) == mi:
            return float(v)
    raise DataError(f"no deflator value for bucket {bucket!r}, month {mi}")


def _weight_at(weights, bucket: str, mi: int) -> float:
    w = weights[bucket]
    if isinstance(w, dict):
        if mi not in w:
            raise DataError(f"no weight for bucket {bucket!r}, month {mi}")
        return float(w[mi])
    return float(w)


def real_yoy_index(
    nominal_by_bucket: dict[str, dict[int, float]],
    deflators,
    weights: dict | None = None,
    name: str = "index",
) -> IndexSeries:
    """Deflated year-over-year growth per bucket, share-weighted.

    ``deflators`` is a constant percent, a TimeSeries of yoy inflation, or a
    per-bucket dict of either; ``weights`` maps bucket to a share or a
    per-month share dict (default: equal shares).  Real growth uses the
    exact ratio 100*((1+g/100)/(1+pi/100)-1).
    """
    buckets = sorted(nominal_by_bucket)
    if not buckets:
        raise DataError("no buckets to index")
    if weights is None:
        weights = {b: 1.0 / len(buckets) for b in buckets}
    if set(weights) != set(buckets):
        raise DataError(f"weights cover {sorted(weights)}, buckets are {buckets}")

    nominal = {b: _sums_to_series(b, nominal_by_bucket[b]) for b in buckets}
    growth: dict[str, TimeSeries] = {}
    for b in buckets:
        gnom = yoy_growth(nominal[b])
        vals = np.empty_like(gnom.values)
        for i, d in enumerate(gnom.dates):
            pi = _deflator_at(deflators, b, month_index(d))
            if pi <= -100.0:
                raise DataError(f"deflator {pi} <= -100% for bucket {b!r}")
            vals[i] = 100.0 * ((1.0 + gnom.values[i] / 100.0) / (1.0 + pi / 100.0) - 1.0)
        growth[b] = TimeSeries(f"{name}_{b}", Frequency.MONTHLY, gnom.dates, vals, "percent")

    common = sorted(
        set.intersection(*(set(month_index(d) for d in growth[b].dates) for b in buckets))
    )
    if not common:
        raise DataError("buckets share no growth months")
    used_weights: dict[str, dict[int, float]] = {b: {} for b in buckets}
    comb = np.empty(len(common))
    for i, mi in enumerate(common):
        wsum = 0.0
        val = 0.0
        for b in buckets:
            w = _weight_at(weights, b, mi)
            if w < 0:
                raise DataError(f"negative weight for bucket {b!r}")
            used_weights[b][mi] = w
            wsum += w
            gi = [month_index(d) for d in growth[b].dates].index(mi)
            val += w * growth[b].values[gi]
        if abs(wsum - 1.0) > 1e-9:
            raise DataError(f"weights sum to {wsum!r} in month {mi}, not 1")
        comb[i] = val
    combined = TimeSeries(
        name, Frequency.MONTHLY, tuple(month_last_day(mi) for mi in common), comb, "percent"
    )
    return IndexSeries(name, nominal, growth, combined, used_weights)


def build_index(
    records,
    purpose: str,
    mapping: dict[str, str] | None = None,
    deflators=0.0,
    weights: dict | None = None,
    winsorize: bool = False,
    limits: tuple[float, float] = (0.5, 99.5),
    name: str | None = None,
) -> tuple[IndexSeries, FilterReport]:
    """Full pipeline: filter, optionally winsorize, aggregate, index."""
    if mapping is None:
        mapping = default_mapping(purpose)
    kept, report = filter_transactions(records, purpose, mapping)
    if winsorize:
        kept = winsorize_amounts(kept, *limits)
    sums = aggregate_by_sector(kept, mapping)
    idx = real_yoy_index(sums, deflators, weights, name or f"{purpose}_index")
    return idx, report
