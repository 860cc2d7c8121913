import json
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference_oracle
from zonebill.billing import (
    BillStatement,
    PriceSchedule,
    UserRecord,
    ZoneAggregate,
    aggregate_supplier_statements,
    aggregate_zone,
    base_bill,
    bill_user,
    compute_weight,
    settle,
    settle_period,
)
from zonebill.errors import InvalidRecord, MixedZones, ZeroDenominator
from zonebill.ring import parse_money

FROZEN = json.loads((Path(__file__).parent / "data" / "frozen_bills.json").read_text())

PRICES = PriceSchedule(
    tp=parse_money("0.10"),
    fit=parse_money("0.04"),
    rp=parse_money("0.15"),
    nf_p={1: parse_money("0.01"), 2: parse_money("0.01")},
    nf_c={1: parse_money("0.02"), 2: parse_money("0.02")},
)


def user(uid, zone, d, m, b, supplier=1):
    return UserRecord(uid, supplier, zone, d, m, b)


def zone_of(t, p=1, c=1, zone_id=0):
    return ZoneAggregate(zone_id, t, p, c)


# -- zone aggregation ----------------------------------------------------------


def test_aggregate_zone_example():
    z = aggregate_zone([user(1, 1, 1, 120, 100), user(2, 1, 0, 80, 90)])
    assert z.deviations == (20, -10)
    assert (z.t, z.p, z.c) == (10, 1, 1)


def test_aggregate_zone_balanced():
    z = aggregate_zone([user(1, 1, 1, 50, 50), user(2, 1, 0, -70, -70)])
    assert z.t == 0 and z.deviations == (0, 0)


def test_inactive_user_counts_as_consumer():
    z = aggregate_zone([UserRecord.inactive(1, 1, 1)])
    assert z.deviations == (0,)
    assert (z.t, z.p, z.c) == (0, 0, 1)


def test_mixed_zones_rejected():
    with pytest.raises(MixedZones):
        aggregate_zone([user(1, 1, 1, 1, 1), user(2, 2, 1, 1, 1)])


# -- weight --------------------------------------------------------------------


def test_weight_oversupply():
    g = compute_weight([zone_of(50), zone_of(-30), zone_of(10)])
    assert (g.T, g.zd_over) == (30, 60)
    assert g.weight == Fraction(1, 2)


def test_weight_balanced():
    g = compute_weight([zone_of(20), zone_of(-20)])
    assert g.T == 0 and g.weight is None


def test_weight_undersupply():
    g = compute_weight([zone_of(-50), zone_of(-10), zone_of(40)])
    assert (g.T, g.zd_under) == (-20, -60)
    assert g.weight == Fraction(1, 3)


# -- individual bills ----------------------------------------------------------


def test_seller_base_bill():
    g = compute_weight([zone_of(0)])
    bill = bill_user(user(1, 1, 1, 100, 100), zone_of(0, zone_id=1), g, PRICES)
    assert bill.amount == 9_000_000


def test_buyer_base_bill():
    g = compute_weight([zone_of(0)])
    bill = bill_user(user(1, 1, 0, -200, -200), zone_of(0, zone_id=1), g, PRICES)
    assert bill.amount == -24_000_000


def test_seller_deviation_adjustment():
    g = compute_weight([zone_of(10), zone_of(-30), zone_of(50)])
    assert (g.T, g.zd_over) == (30, 60)
    u = user(1, 1, 1, 120, 100)
    bill = bill_user(u, ZoneAggregate(1, 10, 1, 0), g, PRICES)
    assert bill.amount - base_bill(u, PRICES) == -300_000


def test_single_zone_by_hand():
    users = [user(1, 1, 1, 120, 100), user(2, 1, 1, 50, 60), user(3, 1, 0, -100, -95)]
    # t = 5, p = 2, c = 1, T = 5 = zd_over, W = 1; user 1 gets 5 * 1/2 * (-0.06)
    assert [b.amount for b in settle_period(users, [1], PRICES)] == [10_650_000, 4_500_000, -12_000_000]


def test_zero_total_gives_base_bills():
    users = [user(1, 1, 1, 120, 100), user(2, 1, 0, -80, -60), user(3, 2, 1, 40, 50), user(4, 2, 0, -100, -110)]
    s = settle(users, [1, 2], PRICES)
    assert s.deviation.T == 0
    assert [b.amount for b in s.bills] == [base_bill(u, PRICES) for u in users]


def test_non_positive_zones_not_adjusted_under_oversupply():
    users = [
        user(1, 1, 1, 150, 100),  # zone 1: t = +50
        user(2, 2, 1, 70, 60),  # zone 2: t = +10 - 10 = 0
        user(3, 2, 1, 50, 60),
        user(4, 3, 1, 95, 100),  # zone 3: t = -5
    ]
    prices = PriceSchedule(100_000, 40_000, 150_000)
    s = settle(users, [1, 2, 3], prices)
    assert s.deviation.T > 0
    adjustments = {b.user_id: b.amount - base_bill(u, prices) for u, b in zip(users, s.bills)}
    assert adjustments[1] < 0
    assert adjustments[2] == adjustments[3] == adjustments[4] == 0


def test_undersupply_charges_consumers():
    users = [user(1, 1, 0, -130, -100), user(2, 1, 0, -90, -100), user(3, 1, 1, 80, 100)]
    s = settle(users, [1], PRICES)
    # v = -30, +10, -20 so T = -40, W = 1, c = 2; user 1 pays 40/2 * 0.05
    assert s.deviation.T == -40
    assert s.bills[0].amount - base_bill(users[0], PRICES) == -1_000_000
    assert s.bills[1].amount == base_bill(users[1], PRICES)
    assert s.bills[2].amount == base_bill(users[2], PRICES)


def test_missing_prosumers_is_an_error():
    g = compute_weight([zone_of(10)])
    with pytest.raises(ZeroDenominator):
        bill_user(user(1, 1, 1, 20, 10), ZoneAggregate(1, 10, 0, 1), g, PRICES)


def test_user_must_be_in_zone():
    g = compute_weight([zone_of(0)])
    with pytest.raises(MixedZones):
        bill_user(user(1, 2, 1, 0, 0), ZoneAggregate(1, 0, 1, 0), g, PRICES)


def test_record_validation():
    with pytest.raises(InvalidRecord):
        UserRecord(1, 1, 1, d=2, m=0, b=0)
    with pytest.raises(InvalidRecord):
        UserRecord(1, 1, 1, d=1, m=10**7 + 1, b=0)
    with pytest.raises(InvalidRecord):
        UserRecord(1, 1, 1, d=0, m=5, b=0, active=0)


def test_price_ordering_warns():
    with pytest.warns(UserWarning):
        PriceSchedule(tp=50, fit=60, rp=100)


# -- supplier statements -------------------------------------------------------


def test_supplier_statement_two_periods():
    bills = [BillStatement(1, 0, 3_000_000), BillStatement(1, 1, -1_000_000)]
    assert aggregate_supplier_statements(bills, {1: 9}, 2) == {9: [(1, 2_000_000)]}


def test_supplier_statement_three_periods():
    amounts = [parse_money(x) for x in ("3", "-1", "0.5")]
    bills = [BillStatement(1, k, a) for k, a in enumerate(amounts)]
    assert aggregate_supplier_statements(bills, {1: 9}, 3) == {9: [(1, 2_500_000)]}


def test_supplier_statements_are_partitioned():
    bills = [BillStatement(u, 0, 10 * u) for u in (1, 2, 3, 4)]
    out = aggregate_supplier_statements(bills, {1: 7, 2: 8, 3: 7, 4: 8}, 1)
    assert out == {7: [(1, 10), (3, 30)], 8: [(2, 20), (4, 40)]}


def test_inactive_user_total_is_zero():
    users = [UserRecord.inactive(5, 1, 1), user(6, 1, 1, 10, 0)]
    bills = settle_period(users, [1], PRICES) + settle_period(users, [1], PRICES)
    bills = [BillStatement(b.user_id, k, b.amount) for k, b in zip((0, 0, 1, 1), bills)]
    assert dict(aggregate_supplier_statements(bills, {5: 1, 6: 1}, 2)[1])[5] == 0


def test_supplier_statements_need_a_period():
    with pytest.raises(ValueError):
        aggregate_supplier_statements([], {}, 0)


# -- frozen reference ----------------------------------------------------------


@pytest.mark.parametrize("case", range(len(FROZEN)))
def test_matches_frozen_reference(case):
    c = FROZEN[case]
    zones = c["zones"]
    p = c["prices"]
    prices = PriceSchedule(p["tp"], p["fit"], p["rp"], {z: p["nf_p"] for z in zones}, {z: p["nf_c"] for z in zones})
    records = [UserRecord(*row) for row in c["records"]]
    bills = settle_period(records, zones, prices)
    assert {str(b.user_id): b.amount for b in bills} == c["bills"]


# -- properties ----------------------------------------------------------------


@st.composite
def instances(draw, max_users=12, zones=(1, 2, 3)):
    n = draw(st.integers(1, max_users))
    records = []
    for uid in range(n):
        zone = draw(st.sampled_from(zones))
        if draw(st.integers(0, 5)) == 0:
            records.append(UserRecord.inactive(uid, 1, zone))
            continue
        d = draw(st.integers(0, 1))
        b = draw(st.integers(0, 5000)) * (1 if d else -1)
        m = b + draw(st.integers(-400, 400))
        records.append(UserRecord(uid, 1, zone, d, m, b))
    return records


def _prices(draw_fees=(0, 0)):
    return PriceSchedule(100_000, 40_000, 150_000, {z: draw_fees[0] for z in (1, 2, 3)}, {z: draw_fees[1] for z in (1, 2, 3)})


@given(instances(), st.integers(0, 30_000), st.integers(0, 30_000))
def test_agrees_with_reference_oracle(records, nf_p, nf_c):
    prices = _prices((nf_p, nf_c))
    expected = reference_oracle.settle(
        [(r.user_id, r.zone_id, r.d, r.m, r.b) for r in records], [1, 2, 3],
        prices.tp, prices.fit, prices.rp, dict(prices.nf_p), dict(prices.nf_c),
    )
    assert {b.user_id: b.amount for b in settle_period(records, [1, 2, 3], prices)} == expected


@given(instances())
def test_counts_cover_every_record(records):
    s = settle(records, [1, 2, 3], _prices())
    for z, agg in s.zones.items():
        assert agg.p + agg.c == sum(1 for r in records if r.zone_id == z)
        assert agg.t == sum(r.m - r.b for r in records if r.zone_id == z)
    assert s.deviation.T == sum(a.t for a in s.zones.values())
    if s.deviation.T > 0:
        assert s.deviation.zd_over == sum(a.t for a in s.zones.values() if a.t > 0)
    if s.deviation.T < 0:
        assert s.deviation.zd_under == sum(a.t for a in s.zones.values() if a.t < 0)
    if s.deviation.T:
        assert 0 < s.deviation.weight <= 1


@given(instances())
def test_adjustments_never_favour_deviators(records):
    prices = _prices()
    s = settle(records, [1, 2, 3], prices)
    for r, b in zip(records, s.bills):
        adjustment = b.amount - base_bill(r, prices)
        assert adjustment <= 0
        if s.deviation.T == 0 or not r.active:
            assert adjustment == 0


@given(instances())
def test_settlement_is_pure(records):
    assert settle_period(records, [1, 2, 3], _prices()) == settle_period(list(records), [1, 2, 3], _prices())


@st.composite
def oversupplied(draw):
    """Oversupplied instances where every prosumer of a surplus zone has v > 0."""
    records = draw(instances(max_users=15))
    next_id = len(records)

    def prosumer(zone, v):
        nonlocal next_id
        next_id += 1
        b = draw(st.integers(0, 5000))
        return UserRecord(next_id, 1, zone, 1, b + v, b)

    if sum(r.m - r.b for r in records) <= 0:
        records.append(prosumer(1, 1 - sum(r.m - r.b for r in records) + draw(st.integers(0, 400))))
    zones = {}
    for r in records:
        zones[r.zone_id] = zones.get(r.zone_id, 0) + r.m - r.b
    fixed = []
    for r in records:
        if r.d == 1 and zones[r.zone_id] > 0 and r.m - r.b <= 0:
            r = UserRecord(r.user_id, r.supplier_id, r.zone_id, 0, r.m, r.b)
        fixed.append(r)
    for z, t in zones.items():
        if t > 0 and not any(r.d == 1 and r.zone_id == z for r in fixed):
            fixed.append(prosumer(z, draw(st.integers(1, 400))))
    return fixed


def _adjustment_sum(records, prices):
    s = settle(records, [1, 2, 3], prices)
    adjusted = sum(1 for r, b in zip(records, s.bills) if b.amount != base_bill(r, prices))
    total = sum(b.amount - base_bill(r, prices) for r, b in zip(records, s.bills))
    return s, total, adjusted


@settings(max_examples=200)
@given(oversupplied())
def test_oversupply_cost_is_fully_split(records):
    prices = _prices()
    s, total, adjusted = _adjustment_sum(records, prices)
    assert s.deviation.T > 0
    target = s.deviation.T * (prices.fit - prices.tp)
    # each adjusted user carries at most half a unit of rounding
    assert 2 * abs(total - target) <= adjusted
    if all(a.p <= 2 for a in s.zones.values() if a.t > 0):
        assert abs(total - target) <= len(s.zones)
