"""Benchmark grid runner and report rendering.

CSV columns (frozen; one row per configuration and run)::

    backend, mode, n_users, n_zones, n_periods, seed, offline_s, online_s,
    online_rounds, online_messages, online_bytes, offline_bytes, verdict, detail

``verdict`` is ``pass`` or ``fail``; a row whose session crashed is a
``fail`` with the error in ``detail``. Times are seconds with six decimals.
The JSON report carries the same rows plus scaling ratios and the published
reference figures the numbers can be set against.
"""
from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field
from itertools import product
from typing import Iterable, Sequence

from ..mpc.shares import Backend
from ..runtime.config import ComparisonMode
from ..runtime.session import run_session
from .scenario import ScenarioParams, generate_scenario
from .verify import verify_against_oracle, verify_supplier_totals

CSV_COLUMNS = (
    "backend",
    "mode",
    "n_users",
    "n_zones",
    "n_periods",
    "seed",
    "offline_s",
    "online_s",
    "online_rounds",
    "online_messages",
    "online_bytes",
    "offline_bytes",
    "verdict",
    "detail",
)

# Published figures measured on a 16-core server; shown next to ours, not compared.
REFERENCE_POINTS = (
    {"setting": "honest-majority passive", "phase": "online", "n_users": 5000, "seconds": 5.80},
    {"setting": "dishonest-majority active", "phase": "online", "n_users": 5000, "seconds": 8.40},
    {"setting": "honest-majority passive", "phase": "online", "n_users": 1000, "rounds": 9085},
    {"setting": "honest-majority passive, deviations revealed", "phase": "online", "n_users": 1000, "rounds": 2085},
)

DATA_LABEL = "synthetic inputs from the zonebill generator"


@dataclass(frozen=True)
class BenchmarkRow:
    backend: str
    mode: str
    n_users: int
    n_zones: int
    n_periods: int
    seed: int
    offline_s: float
    online_s: float
    online_rounds: int
    online_messages: int
    online_bytes: int
    offline_bytes: int
    verdict: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            values = asdict(row)
            writer.writerow([f"{values[c]:.6f}" if isinstance(values[c], float) else values[c] for c in CSV_COLUMNS])
        return buf.getvalue()

    def median_rows(self) -> dict[tuple[str, str, int], BenchmarkRow]:
        """One row per configuration: median online time over repeats, first run's counters."""
        grouped: dict[tuple[str, str, int], list[BenchmarkRow]] = {}
        for row in self.rows:
            grouped.setdefault((row.backend, row.mode, row.n_users), []).append(row)
        out = {}
        for key, rows in grouped.items():
            online = statistics.median(r.online_s for r in rows)
            offline = statistics.median(r.offline_s for r in rows)
            verdict = "pass" if all(r.passed for r in rows) else "fail"
            out[key] = BenchmarkRow(**{**asdict(rows[0]), "online_s": online, "offline_s": offline, "verdict": verdict})
        return out

    def scaling(self) -> list[dict]:
        """Online time and round ratios between every pair of sizes ``n`` and ``2n``."""
        rows = self.median_rows()
        out = []
        for (backend, mode, n), row in sorted(rows.items()):
            double = rows.get((backend, mode, 2 * n))
            if double is None or not (row.passed and double.passed):
                continue
            out.append(
                {
                    "backend": backend,
                    "mode": mode,
                    "n_users": n,
                    "time_ratio": round(double.online_s / row.online_s, 6) if row.online_s else None,
                    "rounds_ratio": round(double.online_rounds / row.online_rounds, 6),
                }
            )
        return out

    def mode_comparison(self) -> list[dict]:
        """Online rounds with deviations revealed vs oblivious comparison, per size."""
        rows = self.median_rows()
        out = []
        for (backend, mode, n), row in sorted(rows.items()):
            if mode != ComparisonMode.OBLIVIOUS.value:
                continue
            reveal = rows.get((backend, ComparisonMode.REVEAL_DEVIATIONS.value, n))
            if reveal is None:
                continue
            out.append(
                {
                    "backend": backend,
                    "n_users": n,
                    "oblivious_rounds": row.online_rounds,
                    "reveal_rounds": reveal.online_rounds,
                    "reveal_fewer": reveal.online_rounds < row.online_rounds,
                }
            )
        return out

    def to_json(self) -> str:
        doc = {
            "data": DATA_LABEL,
            "columns": list(CSV_COLUMNS),
            "rows": [asdict(r) for r in self.rows],
            "scaling": self.scaling(),
            "mode_comparison": self.mode_comparison(),
            "reference_points": list(REFERENCE_POINTS),
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> BenchmarkReport:
        return cls([BenchmarkRow(**row) for row in json.loads(text)["rows"]])


def run_row(
    backend: Backend,
    mode: ComparisonMode,
    n_users: int,
    n_zones: int = 10,
    n_periods: int = 1,
    seed: int = 1,
    transport: str = "memory",
    batch_size: int | None = 8,
    params: ScenarioParams | None = None,
) -> BenchmarkRow:
    base = dict(backend=Backend(backend).value, mode=ComparisonMode(mode).value, n_users=n_users,
                n_zones=n_zones, n_periods=n_periods, seed=seed)
    try:
        p = params or ScenarioParams()
        p = ScenarioParams.from_dict({**asdict(p), "n_users": n_users, "n_zones": n_zones, "n_periods": n_periods})
        scenario = generate_scenario(p, seed)
        config = scenario.session_config(backend, mode, batch_size=batch_size)
        result = run_session(config, scenario.records, transport=transport)
        verdict = verify_against_oracle(scenario, result.bills)
        totals = verify_supplier_totals(scenario, result.supplier_totals)
        ok = verdict.passed and totals.passed and not result.violations
        detail = verdict.describe() if not verdict.passed else totals.describe() if not totals.passed else ""
        if result.violations:
            detail = "; ".join(result.violations[:3])
        return BenchmarkRow(
            **base,
            offline_s=result.offline_seconds,
            online_s=result.online_seconds,
            online_rounds=result.online_rounds,
            online_messages=result.online_messages,
            online_bytes=result.online_bytes,
            offline_bytes=result.offline_bytes,
            verdict="pass" if ok else "fail",
            detail=detail,
        )
    except Exception as e:
        return BenchmarkRow(**base, offline_s=0.0, online_s=0.0, online_rounds=0, online_messages=0,
                            online_bytes=0, offline_bytes=0, verdict="fail", detail=f"{type(e).__name__}: {e}")


def run_benchmark_suite(
    backends: Iterable[Backend] = tuple(Backend),
    modes: Iterable[ComparisonMode] = tuple(ComparisonMode),
    sizes: Sequence[int] = (1000, 2000, 3000, 4000, 5000),
    n_zones: int = 10,
    n_periods: int = 1,
    seed: int = 1,
    repeats: int = 1,
    transport: str = "memory",
    batch_size: int | None = 8,
    progress=None,
) -> BenchmarkReport:
    """Run every grid cell sequentially; a failing cell is recorded and the suite goes on."""
    report = BenchmarkReport()
    for backend, mode, n in product(backends, modes, sizes):
        for _ in range(repeats):
            row = run_row(backend, mode, n, n_zones, n_periods, seed, transport, batch_size)
            report.rows.append(row)
            if progress is not None:
                progress(row)
    return report
