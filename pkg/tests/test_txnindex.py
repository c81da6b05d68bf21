from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from nowcastkit import synth, txnindex
from nowcastkit.dataio import TransactionRecord
from nowcastkit.series import DataError, Frequency, TimeSeries, month_index, month_last_day


def rec(**kw):
    base = dict(
        date=dt.date(2019, 3, 14),
        payer="individual",
        channel="pos",
        sector_code="grocery",
        city=34,
        active=True,
        amount=100.0,
    )
    base.update(kw)
    return TransactionRecord(**base)


# ---------------------------------------------------------------------------
# filtering rules


@pytest.mark.parametrize(
    "change, rule",
    [
        (dict(payer="firm"), "wrong_payer"),
        (dict(channel="transfer"), "wrong_channel"),
        (dict(channel="atm"), "wrong_channel"),
    ],
)
def test_consumption_rejections(change, rule):
    kept, report = txnindex.filter_transactions([rec(**change)], "consumption")
    assert kept == []
    assert report.excluded == {rule: 1}
    assert report.n_input == 1 and report.n_kept == 0


def test_consumption_keeps_all_card_channels():
    recs = [rec(channel=c) for c in txnindex.CONSUMPTION_CHANNELS]
    kept, report = txnindex.filter_transactions(recs, "consumption")
    assert len(kept) == 3
    assert report.excluded == {}


@pytest.mark.parametrize(
    "change, rule",
    [
        (dict(channel="pos"), "wrong_channel"),
        (dict(payer="individual"), "wrong_payer"),
        (dict(active=False), "inactive_firm"),
        (dict(city=0), "missing_city"),
        (dict(sector_code="florist"), "unmapped_sector"),
    ],
)
def test_investment_rejections_in_rule_order(change, rule):
    base = dict(payer="firm", channel="transfer", sector_code="machinery_mfg", city=6)
    base.update(change)
    kept, report = txnindex.filter_transactions([rec(**base)], "investment")
    assert kept == []
    assert report.excluded == {rule: 1}


def test_investment_first_failing_rule_gets_the_blame():
    # fails payer, activity and city checks at once, but channel is checked
    # first and channel passes, so wrong_payer is charged
    r = rec(payer="individual", channel="transfer", city=0, active=False)
    _, report = txnindex.filter_transactions([r], "investment")
    assert report.excluded == {"wrong_payer": 1}


def test_house_purchase_skips_sector_mapping():
    r = rec(payer="firm", channel="house_purchase", sector_code="whatever", city=1)
    kept, report = txnindex.filter_transactions([r], "investment")
    assert len(kept) == 1
    assert report.excluded == {}


def test_filter_purpose_validation():
    with pytest.raises(DataError, match="purpose"):
        txnindex.filter_transactions([], "savings")
    with pytest.raises(DataError, match="purpose"):
        txnindex.default_mapping("savings")


# ---------------------------------------------------------------------------
# winsorizing


def test_winsorize_clips_within_month():
    recs = [rec(amount=a) for a in [1.0] + [10.0] * 98 + [1000.0]]
    out = txnindex.winsorize_amounts(recs, 1.0, 99.0)
    amts = sorted(r.amount for r in out)
    assert amts[0] > 1.0
    assert amts[-1] < 1000.0
    assert amts[50] == 10.0


def test_winsorize_is_per_month():
    recs = [rec(date=dt.date(2019, 3, 5), amount=1e6)] + [
        rec(date=dt.date(2019, 4, 5 + i), amount=10.0) for i in range(5)
    ]
    out = txnindex.winsorize_amounts(recs, 10.0, 90.0)
    march = [r for r in out if r.date.month == 3]
    assert march[0].amount == 1e6  # alone in its month: percentiles are itself


def test_winsorize_limit_validation():
    with pytest.raises(DataError, match="percentile"):
        txnindex.winsorize_amounts([], 60.0, 40.0)


# ---------------------------------------------------------------------------
# aggregation


def test_aggregate_sums_by_bucket_and_month():
    recs = [
        rec(sector_code="grocery", amount=5.0),
        rec(sector_code="fuel", amount=7.0),
        rec(sector_code="travel", amount=11.0),
        rec(date=dt.date(2019, 4, 2), sector_code="grocery", amount=13.0),
    ]
    sums = txnindex.aggregate_by_sector(recs, txnindex.DEFAULT_CONSUMPTION_MAP)
    mi3 = month_index(dt.date(2019, 3, 1))
    assert sums["goods"][mi3] == 12.0
    assert sums["services"][mi3] == 11.0
    assert sums["goods"][mi3 + 1] == 13.0


def test_aggregate_routes_house_purchases_to_construction():
    r = rec(payer="firm", channel="house_purchase", sector_code="n/a", amount=9.0)
    sums = txnindex.aggregate_by_sector([r], txnindex.DEFAULT_INVESTMENT_MAP)
    assert sums["construction"][month_index(r.date)] == 9.0


def test_aggregate_lists_unmapped_codes_sorted():
    recs = [rec(sector_code="zebra"), rec(sector_code="aardvark")]
    with pytest.raises(DataError, match=r"\['aardvark', 'zebra'\]"):
        txnindex.aggregate_by_sector(recs, txnindex.DEFAULT_CONSUMPTION_MAP)


# ---------------------------------------------------------------------------
# index arithmetic


def month_sums(start_mi, levels):
    return {start_mi + i: float(v) for i, v in enumerate(levels)}


def test_real_yoy_index_hand_oracle():
    mi0 = 2018 * 12
    # goods grow 10% nominal, services 21%; deflator 10%
    goods = month_sums(mi0, [100.0] * 12 + [110.0])
    services = month_sums(mi0, [200.0] * 12 + [242.0])
    idx = txnindex.real_yoy_index(
        {"goods": goods, "services": services},
        deflators=10.0,
        weights={"goods": 0.7, "services": 0.3},
        name="cons",
    )
    mi = mi0 + 12
    g_goods = idx.bucket_growth["goods"].values[0]
    g_serv = idx.bucket_growth["services"].values[0]
    assert g_goods == pytest.approx(0.0, abs=1e-12)  # (1.10 / 1.10 - 1)
    assert g_serv == pytest.approx(10.0, abs=1e-12)  # (1.21 / 1.10 - 1)
    assert idx.combined.values[0] == pytest.approx(0.7 * 0.0 + 0.3 * 10.0, abs=1e-12)
    assert idx.combined.dates[0] == month_last_day(mi)
    assert idx.weights["goods"][mi] == 0.7


def test_real_yoy_index_per_bucket_deflators_and_series():
    mi0 = 2018 * 12
    sums = {"goods": month_sums(mi0, [100.0] * 12 + [120.0])}
    dates = (month_last_day(mi0 + 12),)
    defl = {"goods": TimeSeries("cpi", Frequency.MONTHLY, dates, np.array([20.0]))}
    idx = txnindex.real_yoy_index(sums, defl)
    assert idx.combined.values[0] == pytest.approx(0.0, abs=1e-12)


def test_real_yoy_index_validation():
    mi0 = 2018 * 12
    sums = {"goods": month_sums(mi0, [100.0] * 13)}
    with pytest.raises(DataError, match="no buckets"):
        txnindex.real_yoy_index({}, 0.0)
    with pytest.raises(DataError, match="weights cover"):
        txnindex.real_yoy_index(sums, 0.0, weights={"services": 1.0})
    with pytest.raises(DataError, match="not 1"):
        txnindex.real_yoy_index(sums, 0.0, weights={"goods": 0.8})
    with pytest.raises(DataError, match="negative weight"):
        txnindex.real_yoy_index(
            {"goods": sums["goods"], "services": month_sums(mi0, [1.0] * 13)},
            0.0,
            weights={"goods": 1.5, "services": -0.5},
        )
    with pytest.raises(DataError, match="<= -100"):
        txnindex.real_yoy_index(sums, -100.0)
    gappy = dict(sums["goods"])
    del gappy[mi0 + 5]
    with pytest.raises(DataError, match="gaps"):
        txnindex.real_yoy_index({"goods": gappy}, 0.0)
    with pytest.raises(DataError, match="no deflator value"):
        txnindex.real_yoy_index(
            sums,
            TimeSeries("cpi", Frequency.MONTHLY, (month_last_day(mi0),), np.array([5.0])),
        )


# ---------------------------------------------------------------------------
# full pipeline round trip


def test_pipeline_recovers_planted_growth_exactly():
    """Generate transactions from known bucket paths, rebuild the index, and
    compare with the deflated growth implied by the generator's manifest."""
    econ = synth.gen_factor_panel(synth.SynthSpec(n_years=3), seed=5)
    targets = synth.index_targets(econ, "consumption", inflation=8.0)
    recs, manifest = synth.gen_transactions(targets, "consumption", seed=2, n_per_month=25)
    idx, report = txnindex.build_index(recs, "consumption", deflators=8.0)
    assert report.n_kept == len(recs)

    # nominal bucket sums must match the generator's manifest to float precision
    for b, sums in manifest["bucket_sums"].items():
        s = idx.bucket_nominal[b]
        for d, v in zip(s.dates, s.values):
            assert v == pytest.approx(sums[month_index(d)], rel=1e-12)

    # and the combined index must recover the deflated nominal growth
    for b in idx.bucket_growth:
        series = idx.bucket_nominal[b]
        vals = series.values
        for i, d in enumerate(idx.bucket_growth[b].dates):
            j = series.dates.index(d)
            gnom = 100.0 * (vals[j] / vals[j - 12] - 1.0)
            greal = 100.0 * ((1 + gnom / 100) / 1.08 - 1)
            assert idx.bucket_growth[b].values[i] == pytest.approx(greal, abs=1e-9)


def test_pipeline_excludes_planted_violations_exactly():
    econ = synth.gen_factor_panel(synth.SynthSpec(n_years=3), seed=6)
    targets = synth.index_targets(econ, "investment", inflation=5.0)
    violations = {"wrong_payer": 3, "inactive_firm": 2, "missing_city": 4}
    recs, manifest = synth.gen_transactions(
        targets, "investment", seed=3, n_per_month=20, violations=violations
    )
    idx_clean, rep = txnindex.build_index(recs, "investment", deflators=5.0)
    assert rep.excluded == violations
    assert rep.n_kept == manifest["n_clean"]
    assert rep.n_input == len(recs)
