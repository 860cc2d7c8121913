"""Frame transports: in-process queues for tests, TCP sockets for real deployments.

Both expose ``send(dst, frame)``, ``recv(src, timeout)`` and ``close()``,
where a frame is one encoded :class:`~zonebill.runtime.wire.WireMessage`.
Channels are assumed private and authentic (a TLS wrapper can be added
around the socket without touching the protocol).
"""
from __future__ import annotations

import os
import queue
import socket
import threading
import time
from typing import Callable, Iterable

from ..errors import SessionAborted, Timeout, TransportError, WireFormatError
from .wire import HEADER, HEADER_SIZE, MAX_PAYLOAD, PHASE_HELLO, WireMessage, hello

Tamper = Callable[[int, int, bytes], bytes]

_ABORT = object()


class InMemoryHub:
    """Shared mailbox for all roles of one session running in one process.

    ``tamper(src, dst, frame) -> frame`` lets tests corrupt traffic in flight.
    """

    def __init__(self, tamper: Tamper | None = None):
        self._queues: dict[tuple[int, int], queue.SimpleQueue] = {}
        self._lock = threading.Lock()
        self.tamper = tamper
        self.aborted = threading.Event()

    def _queue(self, src: int, dst: int) -> queue.SimpleQueue:
        key = (src, dst)
        q = self._queues.get(key)
        if q is None:
            with self._lock:
                q = self._queues.setdefault(key, queue.SimpleQueue())
        return q

    def endpoint(self, role: int) -> InMemoryTransport:
        return InMemoryTransport(self, role)

    def abort(self) -> None:
        self.aborted.set()
        with self._lock:
            for q in self._queues.values():
                q.put(_ABORT)


class InMemoryTransport:
    def __init__(self, hub: InMemoryHub, role: int):
        self.hub = hub
        self.role = role

    def send(self, dst: int, frame: bytes) -> None:
        if self.hub.aborted.is_set():
            raise SessionAborted("session aborted")
        if self.hub.tamper is not None:
            frame = self.hub.tamper(self.role, dst, frame)
        self.hub._queue(self.role, dst).put(frame)

    def recv(self, src: int, timeout: float) -> bytes:
        q = self.hub._queue(src, self.role)
        deadline = time.monotonic() + timeout
        while True:
            if self.hub.aborted.is_set():
                raise SessionAborted("session aborted")
            try:
                item = q.get(timeout=min(0.25, max(deadline - time.monotonic(), 0.001)))
            except queue.Empty:
                if time.monotonic() >= deadline:
                    raise Timeout(f"role {self.role}: nothing from role {src} within {timeout}s") from None
                continue
            if item is _ABORT:
                raise SessionAborted("session aborted")
            return item

    def close(self) -> None:
        pass


# -- TCP ------------------------------------------------------------------------


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


def endpoint_overrides(names: dict[int, str], environ=os.environ) -> dict[int, tuple[str, int]]:
    """``ZONEBILL_ENDPOINT_<ROLE>=host:port`` environment overrides, keyed by role id."""
    out = {}
    for role, name in names.items():
        value = environ.get(f"ZONEBILL_ENDPOINT_{name.upper()}")
        if value:
            out[role] = parse_endpoint(value)
    return out


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise TransportError("connection closed by peer")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes:
    header = _read_exact(sock, HEADER_SIZE)
    length = HEADER.unpack(header)[0]
    if length > MAX_PAYLOAD:
        raise WireFormatError(f"frame of {length} bytes exceeds limit")
    return header + _read_exact(sock, length)


class TcpTransport:
    """One socket per peer; the higher role id dials, the lower one accepts."""

    def __init__(
        self,
        role: int,
        endpoints: dict[int, tuple[str, int]],
        peers: Iterable[int],
        session_id: str,
        connect_timeout: float = 30.0,
    ):
        self.role = role
        self.session_id = session_id
        self._socks: dict[int, socket.socket] = {}
        peers = sorted(set(peers) - {role})
        expect_inbound = {p for p in peers if p > role}
        listener = None
        if expect_inbound:
            listener = socket.create_server(endpoints[role], reuse_port=False)
            listener.settimeout(connect_timeout)
        try:
            for p in peers:
                if p < role:
                    self._socks[p] = self._dial(endpoints[p], connect_timeout)
            while expect_inbound:
                try:
                    conn, _ = listener.accept()
                except socket.timeout:
                    raise Timeout(f"role {role}: peers {sorted(expect_inbound)} never connected") from None
                conn.settimeout(connect_timeout)
                msg = WireMessage.decode(read_frame(conn))
                if msg.phase != PHASE_HELLO or msg.payload.decode() != session_id:
                    conn.close()
                    raise TransportError(f"role {role}: bad hello from role {msg.sender}")
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._socks[msg.sender] = conn
                expect_inbound.discard(msg.sender)
        finally:
            if listener is not None:
                listener.close()

    def _dial(self, address, timeout) -> socket.socket:
        deadline = time.monotonic() + timeout
        while True:
            try:
                sock = socket.create_connection(address, timeout=timeout)
                break
            except OSError:
                if time.monotonic() >= deadline:
                    raise Timeout(f"role {self.role}: cannot reach {address}") from None
                time.sleep(0.05)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.sendall(hello(self.session_id, self.role))
        return sock

    def send(self, dst: int, frame: bytes) -> None:
        try:
            self._socks[dst].sendall(frame)
        except KeyError:
            raise TransportError(f"role {self.role} has no connection to role {dst}") from None
        except OSError as e:
            raise TransportError(f"send to role {dst} failed: {e}") from e

    def recv(self, src: int, timeout: float) -> bytes:
        sock = self._socks.get(src)
        if sock is None:
            raise TransportError(f"role {self.role} has no connection to role {src}")
        sock.settimeout(timeout)
        try:
            return read_frame(sock)
        except socket.timeout:
            raise Timeout(f"role {self.role}: nothing from role {src} within {timeout}s") from None
        except OSError as e:
            raise TransportError(f"recv from role {src} failed: {e}") from e

    def close(self) -> None:
        for sock in self._socks.values():
            try:
                sock.close()
            except OSError:
                pass
        self._socks.clear()
