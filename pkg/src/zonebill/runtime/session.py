"""Run all roles of one session, in threads over queues or in processes over TCP."""
from __future__ import annotations

import multiprocessing
import pickle
import queue
import socket
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Sequence

from ..billing import BillStatement, GlobalDeviation, UserRecord
from ..errors import SessionAborted, SessionFailed, TransportError, ZonebillError
from ..mpc.engine import (
    OPEN_DEVIATION,
    OPEN_MASKED_BEAVER,
    OPEN_MASKED_BIT,
    OPEN_MASKED_COMPARISON,
    OPEN_ZONE_TUPLE,
)
from .config import (
    COMPUTING_PARTIES,
    LEMO_DEALER,
    PREPROC_DEALER,
    SMART_METER_DEALER,
    SUPPLIER_BASE,
    USER_OUTPUT,
    ComparisonMode,
    SessionConfig,
    peers_of,
    role_name,
)
from .endpoint import Endpoint, PhaseCounters, TranscriptMetrics
from .roles import (
    PartyResult,
    computing_party,
    lemo_dealer,
    preprocessing_dealer,
    smart_meter_dealer,
    supplier_output,
    user_gateway,
)
from .transport import InMemoryHub, Tamper, TcpTransport

ALLOWED_OPENINGS = {
    ComparisonMode.OBLIVIOUS: frozenset(
        {OPEN_ZONE_TUPLE, OPEN_MASKED_COMPARISON, OPEN_MASKED_BIT, OPEN_MASKED_BEAVER}
    ),
    ComparisonMode.REVEAL_DEVIATIONS: frozenset({OPEN_ZONE_TUPLE, OPEN_DEVIATION, OPEN_MASKED_BEAVER}),
}


@dataclass
class SessionResult:
    config: SessionConfig
    bills: dict[int, list[int]]  # user id -> bill per period, as opened by the user gateway
    supplier_totals: dict[int, dict[int, int]]  # supplier id -> user id -> summed bill
    metrics: dict[int, TranscriptMetrics]
    opened: dict[int, Counter]
    routing: dict[int, list[tuple[int, int]]]
    deviations: list[GlobalDeviation]
    violations: list[str] = field(default_factory=list)

    def statements(self) -> list[BillStatement]:
        return [
            BillStatement(u.user_id, k, self.bills[u.user_id][k])
            for k in range(self.config.n_periods)
            for u in self.config.users
        ]

    def _cp_online(self) -> list[PhaseCounters]:
        return [self.metrics[cp].online for cp in COMPUTING_PARTIES]

    @property
    def online_seconds(self) -> float:
        return max(c.seconds for c in self._cp_online())

    @property
    def offline_seconds(self) -> float:
        return max(self.metrics[r].offline.seconds for r in (*COMPUTING_PARTIES, PREPROC_DEALER))

    @property
    def online_rounds(self) -> int:
        return max(c.rounds for c in self._cp_online())

    @property
    def online_messages(self) -> int:
        return sum(m.online.messages for m in self.metrics.values())

    @property
    def online_bytes(self) -> int:
        return sum(m.online.bytes for m in self.metrics.values())

    @property
    def offline_bytes(self) -> int:
        return sum(m.offline.bytes for m in self.metrics.values())

    def total_bytes(self) -> int:
        return sum(c.bytes for m in self.metrics.values() for c in m.phases.values())


def audit_openings(opened: dict[int, Counter], mode: ComparisonMode) -> list[str]:
    allowed = ALLOWED_OPENINGS[ComparisonMode(mode)]
    return [
        f"party {cp} opened {n} values labelled {label!r}"
        for cp, counts in sorted(opened.items())
        for label, n in sorted(counts.items())
        if n and label not in allowed
    ]


def audit_routing(config: SessionConfig, routing: dict[int, list[tuple[int, int]]]) -> list[str]:
    """Every customer aggregate goes to exactly its contracted supplier, once per party."""
    contracted = {u.user_id: u.supplier_id for u in config.users}
    problems = []
    for cp, log in sorted(routing.items()):
        seen = Counter(uid for _, uid in log)
        for supplier, uid in log:
            if contracted.get(uid) != supplier:
                problems.append(f"party {cp} routed user {uid} to supplier {supplier}")
        for uid in contracted:
            if seen[uid] != 1:
                problems.append(f"party {cp} delivered user {uid} {seen[uid]} times")
    return problems


def play_role(
    role: int, config: SessionConfig, records: Sequence[Sequence[UserRecord]], ep: Endpoint
) -> Any:
    if role in COMPUTING_PARTIES:
        return computing_party(ep, config)
    if role == SMART_METER_DEALER:
        return smart_meter_dealer(ep, config, records)
    if role == LEMO_DEALER:
        return lemo_dealer(ep, config, records)
    if role == PREPROC_DEALER:
        return preprocessing_dealer(ep, config)
    if role == USER_OUTPUT:
        return user_gateway(ep, config)
    return supplier_output(ep, config, config.suppliers[role - SUPPLIER_BASE])


def _check_records(config: SessionConfig, records: Sequence[Sequence[UserRecord]]) -> None:
    if len(records) != config.n_periods:
        raise ValueError(f"expected records for {config.n_periods} periods, got {len(records)}")


@dataclass
class _Failure:
    role: int
    phase: int
    error: BaseException
    at: float


def _raise_root_cause(config: SessionConfig, failures: list[_Failure]) -> None:
    def secondary(f: _Failure) -> bool:
        return isinstance(f.error, SessionAborted) or type(f.error) is TransportError

    root = min(failures, key=lambda f: (secondary(f), f.at))
    name = role_name(root.role, config) if root.role >= 0 else "session"
    raise SessionFailed(name, root.phase, root.error) from root.error


def _assemble(config: SessionConfig, outputs: dict[int, Any], metrics: dict[int, TranscriptMetrics]) -> SessionResult:
    parties: dict[int, PartyResult] = {cp: outputs[cp] for cp in COMPUTING_PARTIES}
    supplier_totals = {s: outputs[config.supplier_role(s)] for s in config.suppliers}
    routing = {cp: r.routing for cp, r in parties.items()}
    opened = {cp: r.opened for cp, r in parties.items()}
    result = SessionResult(
        config=config,
        bills=outputs[USER_OUTPUT],
        supplier_totals=supplier_totals,
        metrics=metrics,
        opened=opened,
        routing=routing,
        deviations=parties[COMPUTING_PARTIES[0]].deviations,
    )
    result.violations = audit_routing(config, routing) + audit_openings(opened, config.mode)
    return result


def run_session(
    config: SessionConfig,
    records: Sequence[Sequence[UserRecord]],
    transport: str = "memory",
    tamper: Tamper | None = None,
) -> SessionResult:
    """Run every role of the session; ``records[k]`` are the clear inputs of period ``k``.

    Raises :class:`SessionFailed` naming the role and phase of the first failure.
    """
    _check_records(config, records)
    if transport == "memory":
        return _run_threads(config, records, tamper)
    if transport == "tcp":
        if tamper is not None:
            raise ValueError("tampering is only supported on the in-memory transport")
        return _run_processes(config, records)
    raise ValueError(f"unknown transport {transport!r}")


def _run_threads(config, records, tamper) -> SessionResult:
    hub = InMemoryHub(tamper)
    outputs: dict[int, Any] = {}
    metrics: dict[int, TranscriptMetrics] = {}
    failures: list[_Failure] = []

    def worker(role: int) -> None:
        ep = Endpoint(role, hub.endpoint(role), config.session_id, config.timeout)
        metrics[role] = ep.metrics
        try:
            outputs[role] = play_role(role, config, records, ep)
        except BaseException as e:
            failures.append(_Failure(role, ep.failed_phase or 0, e, time.monotonic()))
            hub.abort()

    threads = [threading.Thread(target=worker, args=(r,), name=role_name(r, config)) for r in config.roles]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        _raise_root_cause(config, failures)
    return _assemble(config, outputs, metrics)


# -- TCP -------------------------------------------------------------------------


def free_endpoints(roles: Sequence[int], host: str = "127.0.0.1") -> dict[int, tuple[str, int]]:
    socks = []
    try:
        for _ in roles:
            s = socket.socket()
            s.bind((host, 0))
            socks.append(s)
        return {r: (host, s.getsockname()[1]) for r, s in zip(roles, socks)}
    finally:
        for s in socks:
            s.close()


def run_single_role(
    role: int,
    config: SessionConfig,
    records: Sequence[Sequence[UserRecord]],
    endpoints: dict[int, tuple[str, int]],
) -> tuple[Any, TranscriptMetrics]:
    """Play one role over TCP; the other roles run elsewhere."""
    transport = TcpTransport(role, endpoints, peers_of(role, config), config.session_id, config.timeout)
    ep = Endpoint(role, transport, config.session_id, config.timeout)
    try:
        return play_role(role, config, records, ep), ep.metrics
    except BaseException as e:
        if isinstance(e, ZonebillError) and not isinstance(e, SessionFailed):
            raise SessionFailed(role_name(role, config), ep.failed_phase or 0, e) from e
        raise
    finally:
        transport.close()


def _portable(e: BaseException) -> BaseException:
    try:
        pickle.loads(pickle.dumps(e))
        return e
    except Exception:
        return ZonebillError(f"{type(e).__name__}: {e}")


def _process_worker(role, config, records, endpoints, out) -> None:
    try:
        transport = TcpTransport(role, endpoints, peers_of(role, config), config.session_id, config.timeout)
    except BaseException as e:
        out.put((role, "error", 0, _portable(e), time.time()))
        return
    ep = Endpoint(role, transport, config.session_id, config.timeout)
    try:
        result = play_role(role, config, records, ep)
        out.put((role, "ok", result, ep.metrics.to_dict(), time.time()))
    except BaseException as e:
        out.put((role, "error", ep.failed_phase or 0, _portable(e), time.time()))
    finally:
        # closing the sockets makes peers of a failed role fail fast
        transport.close()


def _run_processes(config, records) -> SessionResult:
    ctx = multiprocessing.get_context("spawn")
    endpoints = free_endpoints(config.roles)
    out = ctx.Queue()
    procs = [
        ctx.Process(target=_process_worker, args=(r, config, records, endpoints, out), name=role_name(r, config))
        for r in config.roles
    ]
    for p in procs:
        p.start()
    outputs: dict[int, Any] = {}
    metrics: dict[int, TranscriptMetrics] = {}
    failures: list[_Failure] = []
    deadline = time.monotonic() + config.timeout * 2 + 60
    try:
        for _ in procs:
            try:
                role, status, a, b, at = out.get(timeout=max(deadline - time.monotonic(), 0.1))
            except queue.Empty:
                failures.append(_Failure(-1, 0, TransportError("roles did not report back in time"), time.time()))
                break
            if status == "ok":
                outputs[role] = a
                metrics[role] = TranscriptMetrics.from_dict(b)
            else:
                failures.append(_Failure(role, a, b, at))
    finally:
        for p in procs:
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()
    if failures:
        _raise_root_cause(config, failures)
    return _assemble(config, outputs, metrics)
