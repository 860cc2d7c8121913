"""Gate evaluation for one computing party.

:class:`ReplicatedEngine` implements three-party replicated sharing with
one-message multiplication: each party masks its cross terms with a
pseudo-random zero sharing and sends a single element to its predecessor.
:class:`AdditiveEngine` implements full-threshold additive sharing where
multiplication consumes a Beaver triple and opens two masked values.

Interactive gates are generator programs (see :mod:`zonebill.mpc.rounds`);
local gates are plain methods or share operators.
"""
from __future__ import annotations

from collections import Counter

import numpy as np

from ..errors import BackendMismatch
from ..ring import ring_scalar
from .preprocessing import PreprocStore
from .rounds import Exchange, Program
from .shares import ARITH, BOOL, N_PARTIES, AddShare, Backend, RepShare, Share, public_share
from ..runtime.wire import spec_of

# labels for every value a computing party learns in clear
OPEN_ZONE_TUPLE = "zone_tuple"
OPEN_MASKED_COMPARISON = "masked_comparison"
OPEN_MASKED_BIT = "masked_bit"
OPEN_MASKED_BEAVER = "masked_beaver"
OPEN_DEVIATION = "deviation"
OPEN_TEST = "test"


class ZeroSharing:
    """Pairwise PRF streams giving shares of zero without interaction.

    Party ``i`` holds keys ``k_i`` and ``k_{i+1}``; its zero share is
    ``F(k_i) - F(k_{i+1})``, which telescopes to zero over the three parties.
    Both holders of a key draw from it in the same order, so the streams stay
    aligned as long as all parties run the same program.
    """

    def __init__(self, own_key: int, next_key: int):
        self._own = np.random.Philox(key=own_key)
        self._next = np.random.Philox(key=next_key)

    def arith(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        a = self._own.random_raw(n).astype(np.uint64)
        b = self._next.random_raw(n).astype(np.uint64)
        return (a - b).reshape(shape)

    def boolean(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        words = (n + 63) // 64
        a = self._own.random_raw(words).astype("<u8").view(np.uint8)
        b = self._next.random_raw(words).astype("<u8").view(np.uint8)
        bits = np.unpackbits(a ^ b, bitorder="little")[:n]
        return bits.reshape(shape)


class Engine:
    backend: Backend

    def __init__(self, pid: int, prep: PreprocStore | None = None):
        self.pid = pid
        self.next = (pid + 1) % N_PARTIES
        self.prev = (pid - 1) % N_PARTIES
        self.peers = [p for p in range(N_PARTIES) if p != pid]
        self.prep = prep
        self.opened: Counter[str] = Counter()

    def const(self, value, kind: str = ARITH) -> Share:
        return public_share(value, self.pid, self.backend, kind)

    def add_const(self, x: Share, value) -> Share:
        return x + self.const(np.broadcast_to(np.asarray(value, dtype=np.uint64), x.shape), ARITH)

    def xor_const(self, x: Share, bits) -> Share:
        return x ^ self.const(np.broadcast_to(np.asarray(bits, dtype=np.uint8), x.shape), BOOL)

    def scale(self, x: Share, public: int | np.ndarray) -> Share:
        if isinstance(public, (int, np.integer)):
            public = ring_scalar(int(public))
        return x * public

    def _own(self, x: Share) -> None:
        if x.backend is not self.backend:
            raise BackendMismatch(f"{type(x).__name__} given to {type(self).__name__}")

    def open(self, x: Share, label: str) -> Program:
        raise NotImplementedError

    def mul(self, x: Share, y: Share) -> Program:
        raise NotImplementedError

    def and_(self, x: Share, y: Share) -> Program:
        raise NotImplementedError


class ReplicatedEngine(Engine):
    backend = Backend.HONEST_MAJORITY

    def __init__(self, pid: int, zero: ZeroSharing, prep: PreprocStore | None = None):
        super().__init__(pid, prep)
        self.zero = zero

    def open(self, x: RepShare, label: str) -> Program:
        self._own(x)
        got = yield Exchange(send={self.prev: [x.hi]}, recv={self.next: [spec_of(x.hi)]})
        missing = got[self.next][0]
        self.opened[label] += x.lo.size
        if x.kind == ARITH:
            return x.lo + x.hi + missing
        return x.lo ^ x.hi ^ missing

    def mul(self, x: RepShare, y: RepShare) -> Program:
        self._own(x)
        self._own(y)
        if x.kind != ARITH or y.kind != ARITH:
            raise BackendMismatch("mul needs arithmetic shares")
        z = x.lo * y.lo + x.lo * y.hi + x.hi * y.lo + self.zero.arith(x.lo.shape)
        got = yield Exchange(send={self.prev: [z]}, recv={self.next: [spec_of(z)]})
        return RepShare(z, got[self.next][0], ARITH)

    def and_(self, x: RepShare, y: RepShare) -> Program:
        self._own(x)
        self._own(y)
        if x.kind != BOOL or y.kind != BOOL:
            raise BackendMismatch("and_ needs boolean shares")
        z = (x.lo & y.lo) ^ (x.lo & y.hi) ^ (x.hi & y.lo) ^ self.zero.boolean(x.lo.shape)
        got = yield Exchange(send={self.prev: [z]}, recv={self.next: [spec_of(z)]})
        return RepShare(z, got[self.next][0], BOOL)


class AdditiveEngine(Engine):
    backend = Backend.DISHONEST_MAJORITY

    def _broadcast(self, arrays: list[np.ndarray]) -> Program:
        specs = [spec_of(a) for a in arrays]
        got = yield Exchange(send={p: arrays for p in self.peers}, recv={p: specs for p in self.peers})
        return got

    def open(self, x: AddShare, label: str) -> Program:
        self._own(x)
        got = yield from self._broadcast([x.val])
        self.opened[label] += x.val.size
        total = x.val
        for p in self.peers:
            total = total + got[p][0] if x.kind == ARITH else total ^ got[p][0]
        return total

    def mul(self, x: AddShare, y: AddShare) -> Program:
        self._own(x)
        self._own(y)
        if x.kind != ARITH or y.kind != ARITH:
            raise BackendMismatch("mul needs arithmetic shares")
        a, b, c = self.prep.take_triples(x.val.shape)
        e, f = x.val - a.val, y.val - b.val
        got = yield from self._broadcast([e, f])
        for p in self.peers:
            e = e + got[p][0]
            f = f + got[p][1]
        self.opened[OPEN_MASKED_BEAVER] += 2 * e.size
        z = c.val + e * b.val + f * a.val
        if self.pid == 0:
            z = z + e * f
        return AddShare(z, ARITH)

    def and_(self, x: AddShare, y: AddShare) -> Program:
        self._own(x)
        self._own(y)
        if x.kind != BOOL or y.kind != BOOL:
            raise BackendMismatch("and_ needs boolean shares")
        a, b, c = self.prep.take_bit_triples(x.val.shape)
        e, f = x.val ^ a.val, y.val ^ b.val
        got = yield from self._broadcast([e, f])
        for p in self.peers:
            e = e ^ got[p][0]
            f = f ^ got[p][1]
        self.opened[OPEN_MASKED_BEAVER] += 2 * e.size
        z = c.val ^ (e & b.val) ^ (f & a.val)
        if self.pid == 0:
            z = z ^ (e & f)
        return AddShare(z, BOOL)


def make_engine(backend: Backend, pid: int, prep: PreprocStore | None, zero: ZeroSharing | None = None) -> Engine:
    if backend is Backend.HONEST_MAJORITY:
        if zero is None:
            raise ValueError("replicated engine needs zero-sharing keys")
        return ReplicatedEngine(pid, zero, prep)
    return AdditiveEngine(pid, prep)


def setup_zero_sharing(pid: int, rng: np.random.Generator) -> Program:
    """Each party draws a 128-bit key and hands it to its predecessor."""
    key = rng.integers(0, 1 << 64, size=2, dtype=np.uint64)
    prev, nxt = (pid - 1) % N_PARTIES, (pid + 1) % N_PARTIES
    got = yield Exchange(send={prev: [key]}, recv={nxt: [spec_of(key)]})
    other = got[nxt][0]
    return ZeroSharing(int(key[0]) | int(key[1]) << 64, int(other[0]) | int(other[1]) << 64)
