"""Synthetic market instances and their on-disk form.

Inputs are integer Wh. Each period draws, per user, an activity flag, a role
(prosumer or consumer), an accepted bid volume and a deviation from it. Every
zone-period is given a regime so that zone totals come out positive,
exactly zero, or negative: in a "balanced" zone the deviations of active users
cancel in pairs.

Scenario files are JSON with a format tag and version::

    {"format": "zonebill-scenario", "version": 1, "seed": 1, "params": {...},
     "zones": [1, ...], "suppliers": [1, ...], "users": [[id, supplier, zone], ...],
     "prices": [{"period": 0, "tp": ..., "fit": ..., "rp": ...,
                 "nf_p": {"zone": fee}, "nf_c": {"zone": fee}}, ...],
     "periods": [[[id, d, m, b, active], ...], ...]}

Prices are micro-units per Wh. Serialisation is canonical (sorted keys, no
whitespace), so a seed always yields the same bytes.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..billing import MAX_ABS_WH, BillStatement, PriceSchedule, UserRecord, settle_period
from ..errors import InvalidParams
from ..mpc.shares import Backend
from ..runtime.config import ComparisonMode, SessionConfig, UserInfo

FORMAT = "zonebill-scenario"
VERSION = 1

ZONE_RULES = ("round-robin", "contiguous", "random")
OVER, BALANCED, UNDER = 0, 1, 2


@dataclass(frozen=True)
class ScenarioParams:
    n_users: int = 1000
    n_zones: int = 10
    n_periods: int = 1
    n_suppliers: int = 3
    zone_rule: str = "round-robin"
    activity_rate: float = 0.9
    prosumer_rate: float = 0.5
    min_volume: int = 1000
    max_volume: int = 5000
    deviation_spread: int = 500
    # probability of an over-delivering, balanced and under-delivering zone-period
    regime_weights: tuple[float, float, float] = (0.4, 0.2, 0.4)
    tp: int = 100_000
    fit: int = 40_000
    rp: int = 150_000
    nf_p: int = 10_000
    nf_c: int = 20_000

    def validate(self) -> None:
        for name in ("n_users", "n_zones", "n_periods", "n_suppliers"):
            if getattr(self, name) < 1:
                raise InvalidParams(f"{name} must be at least 1")
        if self.zone_rule not in ZONE_RULES:
            raise InvalidParams(f"zone_rule must be one of {ZONE_RULES}")
        for name in ("activity_rate", "prosumer_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParams(f"{name} must lie in [0, 1]")
        if not 0 <= self.min_volume <= self.max_volume:
            raise InvalidParams("need 0 <= min_volume <= max_volume")
        if self.deviation_spread < 0:
            raise InvalidParams("deviation_spread must be non-negative")
        if self.max_volume + self.deviation_spread > MAX_ABS_WH:
            raise InvalidParams(f"max_volume + deviation_spread must not exceed {MAX_ABS_WH} Wh")
        w = self.regime_weights
        if len(w) != 3 or min(w) < 0 or sum(w) <= 0:
            raise InvalidParams("regime_weights needs three non-negative weights with a positive sum")
        if min(self.tp, self.fit, self.rp, self.nf_p, self.nf_c) < 0:
            raise InvalidParams("prices and fees must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioParams:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParams(f"unknown scenario parameters {sorted(unknown)}")
        data = dict(data)
        if "regime_weights" in data:
            data["regime_weights"] = tuple(data["regime_weights"])
        return cls(**data)


@dataclass(frozen=True)
class Scenario:
    params: ScenarioParams
    seed: int
    zones: tuple[int, ...]
    suppliers: tuple[int, ...]
    users: tuple[UserInfo, ...]
    prices: tuple[PriceSchedule, ...]
    records: tuple[tuple[UserRecord, ...], ...]

    @property
    def n_periods(self) -> int:
        return len(self.records)

    def session_config(self, backend: Backend, mode: ComparisonMode, **kwargs) -> SessionConfig:
        return SessionConfig(
            backend=Backend(backend),
            mode=ComparisonMode(mode),
            zones=self.zones,
            suppliers=self.suppliers,
            users=self.users,
            prices=self.prices,
            seed=kwargs.pop("seed", self.seed),
            **kwargs,
        )

    def expected_bills(self) -> list[BillStatement]:
        out = []
        for period, prices in zip(self.records, self.prices):
            out.extend(settle_period(period, self.zones, prices))
        return out

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "seed": self.seed,
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.params).items()},
            "zones": list(self.zones),
            "suppliers": list(self.suppliers),
            "users": [[u.user_id, u.supplier_id, u.zone_id] for u in self.users],
            "prices": [
                {
                    "period": p.period,
                    "tp": p.tp,
                    "fit": p.fit,
                    "rp": p.rp,
                    "nf_p": {str(z): f for z, f in sorted(p.nf_p.items())},
                    "nf_c": {str(z): f for z, f in sorted(p.nf_c.items())},
                }
                for p in self.prices
            ],
            "periods": [[[r.user_id, r.d, r.m, r.b, r.active] for r in period] for period in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        if data.get("format") != FORMAT:
            raise InvalidParams("not a zonebill scenario file")
        if data.get("version") != VERSION:
            raise InvalidParams(f"unsupported scenario version {data.get('version')!r}")
        users = tuple(UserInfo(*u) for u in data["users"])
        directory = {u.user_id: u for u in users}
        prices = tuple(
            PriceSchedule(
                p["tp"],
                p["fit"],
                p["rp"],
                {int(z): f for z, f in p["nf_p"].items()},
                {int(z): f for z, f in p["nf_c"].items()},
                p["period"],
            )
            for p in data["prices"]
        )
        records = []
        for period in data["periods"]:
            rows = []
            for uid, d, m, b, active in period:
                u = directory.get(uid)
                if u is None:
                    raise InvalidParams(f"record for user {uid} who is not in the directory")
                rows.append(UserRecord(uid, u.supplier_id, u.zone_id, d, m, b, active))
            records.append(tuple(rows))
        return cls(
            ScenarioParams.from_dict(data["params"]),
            data["seed"],
            tuple(data["zones"]),
            tuple(data["suppliers"]),
            users,
            prices,
            tuple(records),
        )

    @classmethod
    def from_json(cls, text: str) -> Scenario:
        return cls.from_dict(json.loads(text))


def write_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(scenario.to_json())


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_json(Path(path).read_text())


def _assign_zones(params: ScenarioParams, rng: np.random.Generator) -> np.ndarray:
    n, nz = params.n_users, params.n_zones
    if params.zone_rule == "round-robin":
        return np.arange(n) % nz
    if params.zone_rule == "contiguous":
        return np.arange(n) * nz // n
    return rng.integers(0, nz, size=n)


def _deviations(params, rng, zone_idx, active) -> np.ndarray:
    n = params.n_users
    weights = np.asarray(params.regime_weights, dtype=float)
    regimes = rng.choice(3, size=params.n_zones, p=weights / weights.sum())
    magnitude = rng.integers(0, params.deviation_spread + 1, size=n)
    sign = np.where(rng.random(n) < 0.5, -1, 1)
    user_regime = regimes[zone_idx]
    v = np.select([user_regime == OVER, user_regime == UNDER], [magnitude, -magnitude], sign * magnitude)
    v = v * active
    for z in np.flatnonzero(regimes == BALANCED):
        members = np.flatnonzero((zone_idx == z) & active)
        half = len(members) // 2
        v[members[1 : 2 * half : 2]] = -v[members[0 : 2 * half : 2]]
        if len(members) % 2:
            v[members[-1]] = 0
    return v


def generate_scenario(params: ScenarioParams | None = None, seed: int = 0) -> Scenario:
    params = params or ScenarioParams()
    params.validate()
    rng = np.random.default_rng(seed)
    zones = tuple(range(1, params.n_zones + 1))
    suppliers = tuple(range(1, params.n_suppliers + 1))
    zone_idx = _assign_zones(params, rng)
    supplier_idx = rng.integers(0, params.n_suppliers, size=params.n_users)
    users = tuple(
        UserInfo(i + 1, suppliers[s], zones[z]) for i, (s, z) in enumerate(zip(supplier_idx.tolist(), zone_idx.tolist()))
    )
    prices = tuple(
        PriceSchedule(
            params.tp,
            params.fit,
            params.rp,
            {z: params.nf_p for z in zones},
            {z: params.nf_c for z in zones},
            period=k,
        )
        for k in range(params.n_periods)
    )
    records = []
    for _ in range(params.n_periods):
        active = rng.random(params.n_users) < params.activity_rate
        d = (rng.random(params.n_users) < params.prosumer_rate) & active
        volume = rng.integers(params.min_volume, params.max_volume + 1, size=params.n_users)
        b = np.where(d, volume, -volume) * active
        m = b + _deviations(params, rng, zone_idx, active)
        records.append(
            tuple(
                UserRecord(u.user_id, u.supplier_id, u.zone_id, int(di), int(mi), int(bi), int(ai))
                for u, di, mi, bi, ai in zip(users, d.tolist(), m.tolist(), b.tolist(), active.tolist())
            )
        )
    return Scenario(params, seed, zones, suppliers, users, prices, tuple(records))
