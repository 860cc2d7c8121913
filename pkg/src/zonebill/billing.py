"""Zone-based billing with a universal deviation cost split, evaluated in clear.

This module is the reference every secure execution is checked against. It
works on plain Python ints: energy in signed Wh (exports positive, imports
negative) and money in micro-units (see :mod:`zonebill.ring`). A bill is
positive when the user is credited and negative when charged.

One trading period is settled in three steps:

1. :func:`aggregate_zone` sums deviations ``v = m - b`` per zone and counts
   prosumers and consumers.
2. :func:`compute_weight` derives the global deviation and the zonal weight.
3. :func:`bill_user` prices the meter reading and, when the user's zone is on
   the same side as the global deviation and the user deviated in that
   direction, adds the user's share of the deviation cost.
"""
from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import InvalidRecord, MixedZones, ZeroDenominator
from .ring import public_coefficient

MAX_ABS_WH = 10**7


@dataclass(frozen=True)
class UserRecord:
    user_id: int
    supplier_id: int
    zone_id: int
    d: int  # 1 = prosumer (seller), 0 = consumer (buyer)
    m: int  # meter reading, signed Wh
    b: int  # accepted bid volume, signed Wh
    active: int = 1

    def __post_init__(self):
        if self.d not in (0, 1) or self.active not in (0, 1):
            raise InvalidRecord(f"user {self.user_id}: d and active must be bits")
        if abs(self.m) > MAX_ABS_WH or abs(self.b) > MAX_ABS_WH:
            raise InvalidRecord(f"user {self.user_id}: |m|, |b| must not exceed {MAX_ABS_WH} Wh")
        if not self.active and (self.m or self.b or self.d):
            raise InvalidRecord(f"user {self.user_id}: inactive users carry zero inputs")

    @classmethod
    def inactive(cls, user_id: int, supplier_id: int, zone_id: int) -> UserRecord:
        return cls(user_id, supplier_id, zone_id, d=0, m=0, b=0, active=0)

    @property
    def deviation(self) -> int:
        return self.m - self.b


@dataclass(frozen=True)
class ZoneAggregate:
    zone_id: int
    t: int
    p: int
    c: int
    deviations: tuple[int, ...] = ()


@dataclass(frozen=True)
class GlobalDeviation:
    T: int
    zd_over: int
    zd_under: int
    P: int = 0
    C: int = 0
    w_num: int | None = None
    w_den: int | None = None

    @property
    def weight(self) -> Fraction | None:
        if self.w_num is None:
            return None
        return Fraction(self.w_num, self.w_den)


@dataclass(frozen=True)
class PriceSchedule:
    """Prices for one trading period, all in micro-units per Wh."""

    tp: int
    fit: int
    rp: int
    nf_p: Mapping[int, int] = field(default_factory=dict)
    nf_c: Mapping[int, int] = field(default_factory=dict)
    period: int = 0

    def __post_init__(self):
        if not self.fit < self.tp < self.rp:
            warnings.warn(
                f"period {self.period}: expected FiT < TP < RP, got "
                f"{self.fit}, {self.tp}, {self.rp}",
                stacklevel=2,
            )

    def fee_export(self, zone_id: int) -> int:
        return self.nf_p.get(zone_id, 0)

    def fee_import(self, zone_id: int) -> int:
        return self.nf_c.get(zone_id, 0)


@dataclass(frozen=True)
class BillStatement:
    user_id: int
    period: int
    amount: int


def aggregate_zone(users: Sequence[UserRecord]) -> ZoneAggregate:
    if not users:
        raise ValueError("aggregate_zone needs at least one user; use empty_zone()")
    zone_id = users[0].zone_id
    t = p = c = 0
    deviations = []
    for u in users:
        if u.zone_id != zone_id:
            raise MixedZones(f"users from zones {zone_id} and {u.zone_id}")
        v = u.m - u.b
        deviations.append(v)
        t += v
        p += u.d
        c += 1 - u.d
    return ZoneAggregate(zone_id, t, p, c, tuple(deviations))


def empty_zone(zone_id: int) -> ZoneAggregate:
    return ZoneAggregate(zone_id, 0, 0, 0, ())


def compute_weight(zones: Sequence[ZoneAggregate]) -> GlobalDeviation:
    if not zones:
        raise ValueError("compute_weight needs at least one zone")
    T = sum(z.t for z in zones)
    P = sum(z.p for z in zones)
    C = sum(z.c for z in zones)
    zd_over = zd_under = 0
    w_num = w_den = None
    if T > 0:
        zd_over = sum(z.t for z in zones if z.t > 0)
        w_num, w_den = T, zd_over
    elif T < 0:
        zd_under = sum(z.t for z in zones if z.t < 0)
        # ratio of two negatives; keep the denominator positive
        w_num, w_den = -T, -zd_under
    return GlobalDeviation(T, zd_over, zd_under, P, C, w_num, w_den)


def zone_coefficient(zone: ZoneAggregate, g: GlobalDeviation, prices: PriceSchedule) -> int:
    """Deviation charge applied to each eligible user of ``zone`` (0 if none apply).

    Zones with no prosumers (resp. consumers) get 0: nobody in them can be
    eligible, so the coefficient is never used.
    """
    if g.T > 0 and zone.t > 0 and zone.p > 0:
        return public_coefficient(g.T, g.zd_over, zone.t, zone.p, prices.fit - prices.tp)
    if g.T < 0 and zone.t < 0 and zone.c > 0:
        return public_coefficient(g.T, g.zd_under, zone.t, zone.c, prices.rp - prices.tp)
    return 0


def base_bill(u: UserRecord, prices: PriceSchedule) -> int:
    rate = prices.tp - prices.fee_export(u.zone_id) * u.d + prices.fee_import(u.zone_id) * (1 - u.d)
    return u.m * rate


def bill_user(
    u: UserRecord, z: ZoneAggregate, g: GlobalDeviation, prices: PriceSchedule
) -> BillStatement:
    if u.zone_id != z.zone_id:
        raise MixedZones(f"user {u.user_id} is in zone {u.zone_id}, not {z.zone_id}")
    amount = base_bill(u, prices)
    v = u.m - u.b
    if g.T > 0:
        if z.t > 0 and v > 0 and u.d == 1:
            if z.p == 0:
                raise ZeroDenominator(f"zone {z.zone_id} has no prosumers")
            amount += public_coefficient(g.T, g.zd_over, z.t, z.p, prices.fit - prices.tp)
    elif g.T < 0:
        if z.t < 0 and v < 0 and u.d == 0:
            if z.c == 0:
                raise ZeroDenominator(f"zone {z.zone_id} has no consumers")
            amount += public_coefficient(g.T, g.zd_under, z.t, z.c, prices.rp - prices.tp)
    return BillStatement(u.user_id, prices.period, amount)


@dataclass(frozen=True)
class Settlement:
    zones: dict[int, ZoneAggregate]
    deviation: GlobalDeviation
    bills: list[BillStatement]


def settle(
    users: Sequence[UserRecord], zone_ids: Iterable[int], prices: PriceSchedule
) -> Settlement:
    zone_ids = list(zone_ids)
    by_zone: dict[int, list[UserRecord]] = {z: [] for z in zone_ids}
    for u in users:
        if u.zone_id not in by_zone:
            raise MixedZones(f"user {u.user_id} is in undeclared zone {u.zone_id}")
        by_zone[u.zone_id].append(u)
    zones = {
        z: aggregate_zone(members) if members else empty_zone(z) for z, members in by_zone.items()
    }
    g = compute_weight(list(zones.values()))
    bills = [bill_user(u, zones[u.zone_id], g, prices) for u in users]
    return Settlement(zones, g, bills)


def settle_period(
    users: Sequence[UserRecord], zone_ids: Iterable[int], prices: PriceSchedule
) -> list[BillStatement]:
    return settle(users, zone_ids, prices).bills


def aggregate_supplier_statements(
    bills: Iterable[BillStatement], supplier_of: Mapping[int, int], periods: int
) -> dict[int, list[tuple[int, int]]]:
    """Per-supplier list of ``(user_id, total over periods)`` for its own customers."""
    if periods < 1:
        raise ValueError("need at least one period")
    totals: dict[int, int] = defaultdict(int)
    for bill in bills:
        if not 0 <= bill.period < periods:
            raise ValueError(f"bill for period {bill.period} outside 0..{periods - 1}")
        totals[bill.user_id] += bill.amount
    out: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for user_id in sorted(totals):
        out[supplier_of[user_id]].append((user_id, totals[user_id]))
    return dict(out)
