import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zonebill.errors import SessionAborted, Timeout, TransportError, WireFormatError
from zonebill.mpc.rounds import Exchange, gather
from zonebill.runtime.endpoint import Endpoint, TranscriptMetrics
from zonebill.runtime.session import free_endpoints
from zonebill.runtime.transport import InMemoryHub, TcpTransport, endpoint_overrides, parse_endpoint
from zonebill.runtime.wire import (
    ARITH,
    BOOL,
    HEADER_SIZE,
    PHASE_HELLO,
    WireMessage,
    decode_arrays,
    encode_arrays,
    hello,
    spec_of,
)
from zonebill.ring import MASK


def test_header_layout():
    frame = WireMessage("s", 3, 7, 258, b"\x01\x02").encode()
    assert HEADER_SIZE == 10
    assert frame[:HEADER_SIZE] == bytes([2, 0, 0, 0, 3, 7, 2, 1, 0, 0])
    assert WireMessage.decode(frame, "s") == WireMessage("s", 3, 7, 258, b"\x01\x02")


def test_bad_length_is_rejected():
    frame = WireMessage("s", 1, 0, 1, b"abcd").encode()
    with pytest.raises(WireFormatError):
        WireMessage.decode(frame[:-1])
    with pytest.raises(WireFormatError):
        WireMessage.decode(frame[:5])


def test_hello_carries_session_id():
    msg = WireMessage.decode(hello("abc", 4))
    assert (msg.phase, msg.sender, msg.payload) == (PHASE_HELLO, 4, b"abc")


@given(
    st.lists(st.integers(0, MASK), max_size=40),
    st.lists(st.integers(0, 1), max_size=200),
)
def test_array_round_trip(words, bits):
    arrays = [np.array(words, dtype=np.uint64), np.array(bits, dtype=np.uint8)]
    payload = encode_arrays(arrays)
    assert len(payload) == 8 + 8 * len(words) + 8 * ((len(bits) + 63) // 64)
    out = decode_arrays(payload, [spec_of(a) for a in arrays])
    assert all(np.array_equal(a, b) and a.dtype == b.dtype for a, b in zip(arrays, out))


def test_two_dimensional_bits():
    bits = np.random.default_rng(0).integers(0, 2, size=(5, 63), dtype=np.uint8)
    (out,) = decode_arrays(encode_arrays([bits]), [spec_of(bits)])
    assert np.array_equal(out, bits)


def test_variable_length_ring_array():
    (out,) = decode_arrays(encode_arrays([np.arange(5, dtype=np.uint64)]), [(ARITH, (-1,))])
    assert out.tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(WireFormatError):
        decode_arrays(encode_arrays([np.ones(3, np.uint8)]), [(BOOL, (-1,))])


def test_payload_mismatches_are_rejected():
    payload = encode_arrays([np.arange(4, dtype=np.uint64)])
    with pytest.raises(WireFormatError):
        decode_arrays(payload, [(ARITH, (3,))])
    with pytest.raises(WireFormatError):
        decode_arrays(payload + b"\0", [(ARITH, (4,))])
    with pytest.raises(WireFormatError):
        decode_arrays(payload[:-8], [(ARITH, (4,))])
    with pytest.raises(WireFormatError):
        decode_arrays(payload, [(ARITH, (4,)), (ARITH, (1,))])
    with pytest.raises(WireFormatError):
        encode_arrays([np.arange(3, dtype=np.int32)])


# -- rounds ----------------------------------------------------------------------


def test_gather_merges_independent_programs_into_one_round():
    def ping(peer, value):
        got = yield Exchange(send={peer: [np.array([value], np.uint64)]}, recv={peer: [(ARITH, (1,))]})
        return int(got[peer][0][0])

    prog = gather(ping(1, 10), ping(1, 20))
    ex = prog.send(None)
    assert [a.tolist() for a in ex.send[1]] == [[10], [20]]
    with pytest.raises(StopIteration) as stop:
        prog.send({1: [np.array([1], np.uint64), np.array([2], np.uint64)]})
    assert list(stop.value.value) == [1, 2]


# -- endpoint and in-memory transport ---------------------------------------------


def _pair(timeout=5.0, tamper=None):
    hub = InMemoryHub(tamper)
    return hub, Endpoint(0, hub.endpoint(0), "t", timeout), Endpoint(1, hub.endpoint(1), "t", timeout)


def test_endpoint_counts_rounds_and_bytes():
    hub, a, b = _pair()
    with a.in_phase(2), b.in_phase(2):
        a.send(1, [np.arange(3, dtype=np.uint64)])
        assert b.recv(0, [(ARITH, (3,))])[0].tolist() == [0, 1, 2]
    frame_size = HEADER_SIZE + 4 + 24
    assert a.metrics.phase(2).bytes == frame_size and a.metrics.phase(2).messages == 1
    assert b.metrics.phase(2).bytes_in == frame_size
    assert a.metrics.transcript == [(2, 1, 1, frame_size)]
    assert a.metrics.shape(2) == [(0, 1, frame_size)]
    assert TranscriptMetrics.from_dict(a.metrics.to_dict()) == a.metrics


def test_endpoint_rejects_phase_mismatch():
    hub, a, b = _pair()
    with a.in_phase(1):
        a.send(1, [np.zeros(1, np.uint64)])
    with pytest.raises(WireFormatError):
        with b.in_phase(2):
            b.recv(0, [(ARITH, (1,))])
    assert b.failed_phase == 2


def test_endpoint_rejects_replayed_round():
    hub, a, b = _pair()
    with a.in_phase(1), b.in_phase(1):
        a.send(1, [np.zeros(1, np.uint64)])
        b.recv(0, [(ARITH, (1,))])
        a.round -= 1
        a.send(1, [np.zeros(1, np.uint64)])
        with pytest.raises(WireFormatError):
            b.recv(0, [(ARITH, (1,))])


def test_endpoint_rejects_wrong_sender():
    hub = InMemoryHub()
    a, b = Endpoint(0, hub.endpoint(0), "t"), Endpoint(1, hub.endpoint(1), "t")
    intruder = Endpoint(2, hub.endpoint(0), "t")  # speaks on role 0's channel
    intruder.send(1, [np.zeros(1, np.uint64)])
    with pytest.raises(TransportError):
        b.recv(0, [(ARITH, (1,))])


def test_memory_transport_timeout():
    hub, a, b = _pair(timeout=0.05)
    with pytest.raises(Timeout):
        b.recv(0, [(ARITH, (1,))])


def test_memory_transport_abort_wakes_receivers():
    hub, a, b = _pair(timeout=30)
    errors = []

    def wait():
        try:
            b.recv(0, [(ARITH, (1,))])
        except Exception as e:
            errors.append(e)

    t = threading.Thread(target=wait)
    t.start()
    hub.abort()
    t.join(5)
    assert not t.is_alive()
    assert isinstance(errors[0], SessionAborted)
    with pytest.raises(SessionAborted):
        a.send(1, [np.zeros(1, np.uint64)])


def test_tamper_hook_sees_frames():
    seen = []

    def tamper(src, dst, frame):
        seen.append((src, dst, len(frame)))
        return frame

    hub, a, b = _pair(tamper=tamper)
    a.send(1, [np.zeros(2, np.uint64)])
    assert seen == [(0, 1, HEADER_SIZE + 4 + 16)]


# -- TCP ----------------------------------------------------------------------------


def test_endpoint_parsing():
    assert parse_endpoint("127.0.0.1:9000") == ("127.0.0.1", 9000)
    assert parse_endpoint("[::1]:80") == ("[::1]", 80)
    with pytest.raises(ValueError):
        parse_endpoint("localhost")
    env = {"ZONEBILL_ENDPOINT_CP1": "h:1"}
    assert endpoint_overrides({0: "cp0", 1: "cp1"}, env) == {1: ("h", 1)}


def test_tcp_transport_exchange():
    endpoints = free_endpoints([0, 1, 2])
    transports = {}

    def connect(role):
        transports[role] = TcpTransport(role, endpoints, [0, 1, 2], "tcp-test", connect_timeout=10)

    threads = [threading.Thread(target=connect, args=(r,)) for r in (0, 1, 2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(15)
    try:
        eps = {r: Endpoint(r, transports[r], "tcp-test", timeout=10) for r in (0, 1, 2)}
        results = {}

        def talk(role):
            nxt, prev = (role + 1) % 3, (role - 1) % 3
            x = np.full(1000, role, dtype=np.uint64)
            with eps[role].in_phase(1):
                got = eps[role].exchange(Exchange(send={nxt: [x]}, recv={prev: [(ARITH, (1000,))]}))
            results[role] = int(got[prev][0][0])

        threads = [threading.Thread(target=talk, args=(r,)) for r in (0, 1, 2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(15)
        assert results == {0: 2, 1: 0, 2: 1}
        with pytest.raises(Timeout):
            transports[0].recv(1, 0.05)
        with pytest.raises(TransportError):
            transports[0].send(5, b"")
    finally:
        for t in transports.values():
            t.close()


def test_tcp_rejects_wrong_session():
    endpoints = free_endpoints([0, 1])
    errors = {}

    def connect(role, sid):
        try:
            TcpTransport(role, endpoints, [0, 1], sid, connect_timeout=5).close()
        except Exception as e:
            errors[role] = e

    threads = [threading.Thread(target=connect, args=(0, "a")), threading.Thread(target=connect, args=(1, "b"))]
    for t in threads:
        t.start()
    for t in threads:
        t.join(10)
    assert isinstance(errors.get(0), TransportError)
