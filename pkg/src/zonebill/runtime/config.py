"""Session configuration and role identities."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from ..billing import PriceSchedule
from ..mpc.preprocessing import PreprocRequest, requirements
from ..mpc.shares import Backend

CP0, CP1, CP2 = 0, 1, 2
COMPUTING_PARTIES = (CP0, CP1, CP2)
SMART_METER_DEALER = 3
LEMO_DEALER = 4
PREPROC_DEALER = 5
USER_OUTPUT = 6
SUPPLIER_BASE = 7

DEFAULT_BATCH_SIZE = 8


class ComparisonMode(str, enum.Enum):
    OBLIVIOUS = "oblivious"
    REVEAL_DEVIATIONS = "reveal-deviations"

    @classmethod
    def parse(cls, text: str) -> ComparisonMode:
        aliases = {"reveal": cls.REVEAL_DEVIATIONS}
        return aliases.get(text) or cls(text)


@dataclass(frozen=True)
class UserInfo:
    """Public directory entry: who the user is, which supplier and zone they belong to."""

    user_id: int
    supplier_id: int
    zone_id: int


@dataclass(frozen=True)
class SessionConfig:
    backend: Backend
    mode: ComparisonMode
    zones: tuple[int, ...]
    suppliers: tuple[int, ...]
    users: tuple[UserInfo, ...]
    prices: tuple[PriceSchedule, ...]
    seed: int = 0
    batch_size: int | None = DEFAULT_BATCH_SIZE
    timeout: float = 120.0
    session_id: str = "zonebill"

    def __post_init__(self):
        if not self.users:
            raise ValueError("a session needs at least one user")
        if not self.prices:
            raise ValueError("a session needs at least one trading period")
        ids = [u.user_id for u in self.users]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate user ids in the directory")
        zones, suppliers = set(self.zones), set(self.suppliers)
        for u in self.users:
            if u.zone_id not in zones:
                raise ValueError(f"user {u.user_id} is in undeclared zone {u.zone_id}")
            if u.supplier_id not in suppliers:
                raise ValueError(f"user {u.user_id} has undeclared supplier {u.supplier_id}")
        if len(self.suppliers) > 255 - SUPPLIER_BASE:
            raise ValueError("too many suppliers for the one-byte sender field")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    @property
    def n_periods(self) -> int:
        return len(self.prices)

    def supplier_role(self, supplier_id: int) -> int:
        return SUPPLIER_BASE + self.suppliers.index(supplier_id)

    @property
    def roles(self) -> list[int]:
        return [*COMPUTING_PARTIES, SMART_METER_DEALER, LEMO_DEALER, PREPROC_DEALER, USER_OUTPUT] + [
            SUPPLIER_BASE + j for j in range(len(self.suppliers))
        ]

    def customers(self, supplier_id: int) -> list[int]:
        return [u.user_id for u in self.users if u.supplier_id == supplier_id]

    def preprocessing_request(self) -> PreprocRequest:
        n = self.n_users * self.n_periods
        if self.mode is ComparisonMode.OBLIVIOUS:
            # m*d and r*d per user, one comparison per user
            return requirements(self.backend, triples=2 * n, masks=n)
        return requirements(self.backend, triples=n, masks=0)


def role_name(role: int, config: SessionConfig | None = None) -> str:
    fixed = {
        CP0: "cp0",
        CP1: "cp1",
        CP2: "cp2",
        SMART_METER_DEALER: "sm",
        LEMO_DEALER: "lemo",
        PREPROC_DEALER: "dealer",
        USER_OUTPUT: "users",
    }
    if role in fixed:
        return fixed[role]
    if config is not None:
        return f"supplier{config.suppliers[role - SUPPLIER_BASE]}"
    return f"supplier#{role - SUPPLIER_BASE}"


def role_from_name(name: str, config: SessionConfig) -> int:
    for role in config.roles:
        if role_name(role, config) == name:
            return role
    raise ValueError(f"unknown role {name!r}")


def peers_of(role: int, config: SessionConfig) -> list[int]:
    """Roles that ``role`` exchanges frames with."""
    if role in COMPUTING_PARTIES:
        return [r for r in config.roles if r != role]
    return list(COMPUTING_PARTIES)
