"""Command line entry point: ``zonebill generate | run | verify | bench``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ZonebillError
from ..mpc.shares import Backend
from ..runtime.config import ComparisonMode, role_from_name, role_name
from ..runtime.roles import PartyResult
from ..runtime.session import run_session, run_single_role
from ..runtime.transport import endpoint_overrides, parse_endpoint
from .bench import run_benchmark_suite
from .scenario import ScenarioParams, generate_scenario, load_scenario
from .verify import verify_against_oracle, verify_supplier_totals

BILLS_FORMAT = "zonebill-bills"


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def cmd_generate(args) -> int:
    params = ScenarioParams(
        n_users=args.users,
        n_zones=args.zones,
        n_periods=args.periods,
        n_suppliers=args.suppliers,
        zone_rule=args.zone_rule,
        activity_rate=args.activity,
        prosumer_rate=args.prosumers,
        deviation_spread=args.spread,
    )
    _write(generate_scenario(params, args.seed).to_json(), args.output)
    return 0


def _load_endpoints(path: str | None, config) -> dict[int, tuple[str, int]]:
    names = {r: role_name(r, config) for r in config.roles}
    endpoints = {}
    if path:
        for name, address in json.loads(Path(path).read_text()).items():
            endpoints[role_from_name(name, config)] = parse_endpoint(address)
    endpoints.update(endpoint_overrides(names))
    missing = [names[r] for r in config.roles if r not in endpoints]
    if missing:
        raise ZonebillError(f"no endpoint for roles {missing}")
    return endpoints


def _role_output(output) -> object:
    if isinstance(output, PartyResult):
        return {"opened": dict(output.opened), "routing": output.routing}
    if isinstance(output, dict):
        return {str(k): v for k, v in output.items()}
    return output


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    config = scenario.session_config(
        Backend.parse(args.backend),
        ComparisonMode.parse(args.mode),
        batch_size=args.batch_size or None,
        timeout=args.timeout,
        **({"seed": args.seed} if args.seed is not None else {}),
    )
    if args.role:
        role = role_from_name(args.role, config)
        output, metrics = run_single_role(role, config, scenario.records, _load_endpoints(args.endpoints, config))
        _write(_dump({"role": args.role, "output": _role_output(output), "metrics": metrics.to_dict()}), args.output)
        return 0
    result = run_session(config, scenario.records, transport=args.transport)
    doc = {
        "format": BILLS_FORMAT,
        "version": 1,
        "backend": config.backend.value,
        "mode": config.mode.value,
        "bills": {str(uid): bills for uid, bills in sorted(result.bills.items())},
        "supplier_totals": {
            str(s): {str(uid): t for uid, t in sorted(rows.items())} for s, rows in result.supplier_totals.items()
        },
    }
    _write(_dump(doc), args.output)
    if args.metrics:
        Path(args.metrics).write_text(
            _dump({role_name(r, config): m.to_dict() for r, m in sorted(result.metrics.items())})
        )
    print(
        f"{len(result.bills)} users, {config.n_periods} period(s): online {result.online_seconds:.3f}s, "
        f"{result.online_rounds} rounds, {result.online_bytes} bytes; offline {result.offline_seconds:.3f}s",
        file=sys.stderr,
    )
    for v in result.violations:
        print(f"violation: {v}", file=sys.stderr)
    return 1 if result.violations else 0


def cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario)
    doc = json.loads(Path(args.bills).read_text())
    if doc.get("format") != BILLS_FORMAT:
        raise ZonebillError(f"{args.bills} is not a bills file")
    bills = {int(uid): b for uid, b in doc["bills"].items()}
    verdict = verify_against_oracle(scenario, bills)
    print(f"bills: {verdict.describe()}")
    ok = verdict.passed
    if doc.get("supplier_totals"):
        totals = {int(s): {int(u): t for u, t in rows.items()} for s, rows in doc["supplier_totals"].items()}
        supplier_verdict = verify_supplier_totals(scenario, totals)
        print(f"supplier totals: {supplier_verdict.describe()}")
        ok = ok and supplier_verdict.passed
    return 0 if ok else 1


def cmd_bench(args) -> int:
    def progress(row):
        print(
            f"{row.backend:>26} {row.mode:>17} {row.n_users:>6}  online {row.online_s:8.3f}s "
            f"{row.online_rounds:>7} rounds  {row.verdict} {row.detail}",
            file=sys.stderr,
        )

    report = run_benchmark_suite(
        backends=[Backend.parse(b) for b in args.backend],
        modes=[ComparisonMode.parse(m) for m in args.mode],
        sizes=args.users,
        n_zones=args.zones,
        n_periods=args.periods,
        seed=args.seed,
        repeats=args.repeats,
        transport=args.transport,
        batch_size=args.batch_size or None,
        progress=progress,
    )
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    if args.json:
        Path(args.json).write_text(report.to_json())
    if not args.csv and not args.json:
        sys.stdout.write(report.to_csv())
    for s in report.scaling():
        print(f"scaling {s['backend']} {s['mode']} {s['n_users']}->{2 * s['n_users']}: "
              f"time x{s['time_ratio']}, rounds x{s['rounds_ratio']}", file=sys.stderr)
    return 0 if all(r.passed for r in report.rows) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zonebill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic scenario file")
    gen.add_argument("--users", type=int, default=1000)
    gen.add_argument("--zones", type=int, default=10)
    gen.add_argument("--periods", type=int, default=1)
    gen.add_argument("--suppliers", type=int, default=3)
    gen.add_argument("--zone-rule", default="round-robin", choices=("round-robin", "contiguous", "random"))
    gen.add_argument("--activity", type=float, default=0.9, help="probability a user trades in a period")
    gen.add_argument("--prosumers", type=float, default=0.5, help="probability an active user sells")
    gen.add_argument("--spread", type=int, default=500, help="maximum |deviation| in Wh")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("-o", "--output")
    gen.set_defaults(func=cmd_generate)

    backends = [b.short for b in Backend] + [b.value for b in Backend]
    modes = ["oblivious", "reveal", "reveal-deviations"]

    run = sub.add_parser("run", help="run a scenario through the protocol")
    run.add_argument("scenario")
    run.add_argument("--backend", default="hm", choices=backends)
    run.add_argument("--mode", default="oblivious", choices=modes)
    run.add_argument("--batch-size", type=int, default=8, help="users per comparison batch; 0 = all at once")
    run.add_argument("--transport", default="memory", choices=("memory", "tcp"))
    run.add_argument("--seed", type=int, help="session randomness seed (defaults to the scenario seed)")
    run.add_argument("--timeout", type=float, default=120.0)
    run.add_argument("--role", help="play a single role (cp0, cp1, cp2, sm, lemo, dealer, users, supplier<id>) over TCP")
    run.add_argument("--endpoints", help="JSON file mapping role names to host:port")
    run.add_argument("-o", "--output")
    run.add_argument("--metrics", help="write per-role transcript metrics here")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="check opened bills against the clear-text reference")
    ver.add_argument("scenario")
    ver.add_argument("bills")
    ver.set_defaults(func=cmd_verify)

    bench = sub.add_parser("bench", help="run a benchmark grid")
    bench.add_argument("--backend", nargs="+", default=["hm", "dm"], choices=backends)
    bench.add_argument("--mode", nargs="+", default=["oblivious", "reveal"], choices=modes)
    bench.add_argument("--users", nargs="+", type=int, default=[1000, 2000, 3000, 4000, 5000])
    bench.add_argument("--zones", type=int, default=10)
    bench.add_argument("--periods", type=int, default=1)
    bench.add_argument("--seed", type=int, default=1)
    bench.add_argument("--repeats", type=int, default=1)
    bench.add_argument("--batch-size", type=int, default=8)
    bench.add_argument("--transport", default="memory", choices=("memory", "tcp"))
    bench.add_argument("--csv")
    bench.add_argument("--json")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ZonebillError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
