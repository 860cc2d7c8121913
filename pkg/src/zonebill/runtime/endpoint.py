"""A protocol role's connection to the session: framing, round driving, accounting."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Any

from ..errors import TransportError, WireFormatError
from ..mpc.rounds import Arrays, Exchange, Program
from .wire import PHASE_OFFLINE, Spec, WireMessage, decode_arrays, encode_arrays

ONLINE_PHASES = (1, 2, 3, 4, 5)


@dataclass
class PhaseCounters:
    rounds: int = 0
    messages: int = 0
    bytes: int = 0
    messages_in: int = 0
    bytes_in: int = 0
    seconds: float = 0.0


@dataclass
class TranscriptMetrics:
    """Per-role counters; ``transcript`` lists ``(phase, round, peer, frame bytes)`` of every send."""

    phases: dict[int, PhaseCounters] = field(default_factory=dict)
    transcript: list[tuple[int, int, int, int]] = field(default_factory=list)

    def phase(self, phase: int) -> PhaseCounters:
        return self.phases.setdefault(phase, PhaseCounters())

    def total(self, phases) -> PhaseCounters:
        out = PhaseCounters()
        for p in phases:
            c = self.phases.get(p)
            if c is None:
                continue
            out.rounds += c.rounds
            out.messages += c.messages
            out.bytes += c.bytes
            out.messages_in += c.messages_in
            out.bytes_in += c.bytes_in
            out.seconds += c.seconds
        return out

    @property
    def offline(self) -> PhaseCounters:
        return self.total([PHASE_OFFLINE])

    @property
    def online(self) -> PhaseCounters:
        return self.total(ONLINE_PHASES)

    def shape(self, phase: int) -> list[tuple[int, int, int]]:
        """Message shape of one phase: ``(round offset, peer, bytes)`` per send."""
        entries = [t for t in self.transcript if t[0] == phase]
        if not entries:
            return []
        first = entries[0][1]
        return [(r - first, peer, n) for _, r, peer, n in entries]

    def to_dict(self) -> dict[str, Any]:
        return {
            "phases": {str(k): asdict(v) for k, v in sorted(self.phases.items())},
            "transcript": [list(t) for t in self.transcript],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TranscriptMetrics:
        return cls(
            {int(k): PhaseCounters(**v) for k, v in data["phases"].items()},
            [tuple(t) for t in data["transcript"]],
        )


class Endpoint:
    def __init__(self, role: int, transport, session_id: str, timeout: float = 120.0):
        self.role = role
        self.transport = transport
        self.session_id = session_id
        self.timeout = timeout
        self.phase = PHASE_OFFLINE
        self.round = 0
        self.metrics = TranscriptMetrics()
        self._last_round: dict[int, int] = {}
        self.failed_phase: int | None = None

    @contextmanager
    def in_phase(self, phase: int):
        previous = self.phase
        self.phase = phase
        counters = self.metrics.phase(phase)
        start = time.perf_counter()
        try:
            yield counters
        except BaseException:
            if self.failed_phase is None:
                self.failed_phase = phase
            raise
        finally:
            counters.seconds += time.perf_counter() - start
            self.phase = previous

    def exchange(self, ex: Exchange) -> Arrays:
        if not ex.send and not ex.recv:
            return {}
        self.round += 1
        counters = self.metrics.phase(self.phase)
        counters.rounds += 1
        for peer in sorted(ex.send):
            payload = encode_arrays(ex.send[peer])
            frame = WireMessage(self.session_id, self.phase, self.role, self.round, payload).encode()
            self.transport.send(peer, frame)
            counters.messages += 1
            counters.bytes += len(frame)
            self.metrics.transcript.append((self.phase, self.round, peer, len(frame)))
        incoming: Arrays = {}
        for peer in sorted(ex.recv):
            incoming[peer] = self._receive(peer, ex.recv[peer], counters)
        return incoming

    def _receive(self, peer: int, specs: list[Spec], counters: PhaseCounters):
        frame = self.transport.recv(peer, self.timeout)
        msg = WireMessage.decode(frame, self.session_id)
        if msg.sender != peer:
            raise TransportError(f"role {self.role}: frame from role {msg.sender} on channel of role {peer}")
        if msg.phase != self.phase:
            raise WireFormatError(f"role {self.role}: got phase {msg.phase} from role {peer} while in phase {self.phase}")
        if msg.round <= self._last_round.get(peer, 0):
            raise WireFormatError(f"role {self.role}: round index from role {peer} went backwards")
        self._last_round[peer] = msg.round
        counters.messages_in += 1
        counters.bytes_in += len(frame)
        return decode_arrays(msg.payload, specs)

    def run(self, program: Program):
        try:
            request = program.send(None)
        except StopIteration as stop:
            return stop.value
        while True:
            incoming = self.exchange(request)
            try:
                request = program.send(incoming)
            except StopIteration as stop:
                return stop.value

    def send(self, peer: int, arrays) -> None:
        self.exchange(Exchange(send={peer: list(arrays)}))

    def recv(self, peer: int, specs) -> list:
        return self.exchange(Exchange(recv={peer: list(specs)}))[peer]
