"""Binary framing shared by every transport.

Frame layout (all little-endian)::

    u32 length      payload length in bytes
    u8  phase       0 = offline/setup, 1..5 = protocol phases, 255 = hello
    u8  sender      role id of the sending endpoint
    u32 round       sender's exchange counter
    payload         ``length`` bytes

A payload is a sequence of arrays, each ``u32 count`` followed by ``count``
8-byte little-endian words. Ring elements are one word each; boolean arrays
are bit-packed 64 to a word (the receiver knows the bit count from the
protocol, so padding bits are dropped on decode). A receiver may accept a
ring array of any length by expecting shape ``(-1,)``.

The session id is not repeated per frame: it travels once in the hello frame
that opens every connection.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import WireFormatError

HEADER = struct.Struct("<IBBI")
HEADER_SIZE = HEADER.size
COUNT = struct.Struct("<I")
MAX_PAYLOAD = 1 << 30

PHASE_OFFLINE = 0
PHASE_HELLO = 255

ARITH = "arith"
BOOL = "bool"

Spec = tuple[str, tuple[int, ...]]


@dataclass(frozen=True)
class WireMessage:
    session_id: str
    phase: int
    sender: int
    round: int
    payload: bytes

    def encode(self) -> bytes:
        if len(self.payload) > MAX_PAYLOAD:
            raise WireFormatError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")
        return HEADER.pack(len(self.payload), self.phase, self.sender, self.round) + self.payload

    @classmethod
    def decode(cls, frame: bytes, session_id: str = "") -> WireMessage:
        if len(frame) < HEADER_SIZE:
            raise WireFormatError("truncated header")
        length, phase, sender, rnd = HEADER.unpack_from(frame)
        if length != len(frame) - HEADER_SIZE:
            raise WireFormatError(f"length field {length} does not match payload of {len(frame) - HEADER_SIZE} bytes")
        return cls(session_id, phase, sender, rnd, bytes(frame[HEADER_SIZE:]))


def hello(session_id: str, sender: int) -> bytes:
    return WireMessage(session_id, PHASE_HELLO, sender, 0, session_id.encode()).encode()


def encode_arrays(arrays: Sequence[np.ndarray]) -> bytes:
    parts = []
    for a in arrays:
        a = np.asarray(a)
        if a.dtype == np.uint8:
            packed = np.packbits(a.ravel(), bitorder="little")
            pad = (-len(packed)) % 8
            if pad:
                packed = np.concatenate([packed, np.zeros(pad, dtype=np.uint8)])
            words = packed.tobytes()
        elif a.dtype == np.uint64:
            words = a.astype("<u8", copy=False).tobytes()
        else:
            raise WireFormatError(f"cannot encode dtype {a.dtype}")
        parts.append(COUNT.pack(len(words) // 8))
        parts.append(words)
    return b"".join(parts)


def decode_arrays(payload: bytes, specs: Sequence[Spec]) -> list[np.ndarray]:
    out = []
    offset = 0
    view = memoryview(payload)
    for kind, shape in specs:
        if offset + 4 > len(payload):
            raise WireFormatError("payload ended before all arrays were read")
        (count,) = COUNT.unpack_from(view, offset)
        offset += 4
        end = offset + 8 * count
        if end > len(payload):
            raise WireFormatError("array count overruns payload")
        variable = -1 in shape
        n = count if variable else (int(np.prod(shape)) if shape else 1)
        if kind == ARITH:
            if count != n:
                raise WireFormatError(f"expected {n} ring elements, got {count}")
            arr = np.frombuffer(view[offset:end], dtype="<u8").astype(np.uint64).reshape(shape)
        else:
            if variable:
                raise WireFormatError("boolean arrays need a fixed shape")
            if count != (n + 63) // 64:
                raise WireFormatError(f"expected {(n + 63) // 64} bit words, got {count}")
            bits = np.unpackbits(np.frombuffer(view[offset:end], dtype=np.uint8), bitorder="little")
            arr = bits[:n].reshape(shape)
        out.append(arr)
        offset = end
    if offset != len(payload):
        raise WireFormatError(f"{len(payload) - offset} trailing payload bytes")
    return out


def spec_of(a: np.ndarray) -> Spec:
    return (BOOL if a.dtype == np.uint8 else ARITH, tuple(a.shape))
