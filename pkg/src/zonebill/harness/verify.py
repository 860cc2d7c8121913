"""Bit-exact comparison of opened bills against the clear-text reference."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from ..billing import BillStatement, aggregate_supplier_statements
from .scenario import Scenario


@dataclass(frozen=True)
class Divergence:
    user_id: int
    period: int | None  # None for a supplier total
    expected: int | None
    actual: int | None


@dataclass(frozen=True)
class Verdict:
    passed: bool
    checked: int
    first: Divergence | None = None
    mismatches: int = 0

    def __bool__(self) -> bool:
        return self.passed

    def describe(self) -> str:
        if self.passed:
            return f"pass ({self.checked} values match)"
        f = self.first
        where = f"period {f.period}" if f.period is not None else "supplier total"
        return (
            f"fail ({self.mismatches} of {self.checked} differ; first: user {f.user_id}, "
            f"{where}, expected {f.expected}, got {f.actual})"
        )


def _as_table(opened) -> dict[tuple[int, int], int]:
    if isinstance(opened, Mapping):
        return {(uid, k): amount for uid, bills in opened.items() for k, amount in enumerate(bills)}
    return {(b.user_id, b.period): b.amount for b in opened}


def verify_against_oracle(
    scenario: Scenario, opened: Mapping[int, list[int]] | Iterable[BillStatement]
) -> Verdict:
    """``opened`` is either ``{user id: [bill per period]}`` or a list of statements."""
    actual = _as_table(opened)
    expected = {(b.user_id, b.period): b.amount for b in scenario.expected_bills()}
    first = None
    mismatches = 0
    for key in sorted(expected.keys() | actual.keys(), key=lambda k: (k[1], k[0])):
        if expected.get(key) != actual.get(key):
            mismatches += 1
            if first is None:
                first = Divergence(key[0], key[1], expected.get(key), actual.get(key))
    return Verdict(mismatches == 0, len(expected), first, mismatches)


def verify_supplier_totals(scenario: Scenario, totals: Mapping[int, Mapping[int, int]]) -> Verdict:
    supplier_of = {u.user_id: u.supplier_id for u in scenario.users}
    reference = aggregate_supplier_statements(scenario.expected_bills(), supplier_of, scenario.n_periods)
    expected = {(s, uid): t for s, rows in reference.items() for uid, t in rows}
    actual = {(s, uid): t for s, rows in totals.items() for uid, t in rows.items()}
    first = None
    mismatches = 0
    for key in sorted(expected.keys() | actual.keys()):
        if expected.get(key) != actual.get(key):
            mismatches += 1
            if first is None:
                first = Divergence(key[1], None, expected.get(key), actual.get(key))
    return Verdict(mismatches == 0, len(expected), first, mismatches)
