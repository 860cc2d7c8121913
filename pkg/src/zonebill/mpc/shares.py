"""Share containers and dealer-side sharing for the two passive backends.

Arithmetic shares live in Z_{2^64} (``uint64``), boolean shares in Z_2
(``uint8`` arrays of 0/1). A secret ``x`` is always split into three
additive components ``x = x0 + x1 + x2`` (XOR for booleans):

* replicated (honest majority): party ``i`` holds ``(x_i, x_{i+1})``;
* additive (dishonest majority): party ``i`` holds ``x_i``.

Operators on shares are the local, communication-free gates. Mixing share
types or domains raises :class:`BackendMismatch`.
"""
from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from ..errors import BackendMismatch, MissingContribution, OpenDisagreement

N_PARTIES = 3


class Backend(str, enum.Enum):
    HONEST_MAJORITY = "honest-majority-passive"
    DISHONEST_MAJORITY = "dishonest-majority-passive"

    @property
    def short(self) -> str:
        return "hm" if self is Backend.HONEST_MAJORITY else "dm"

    @classmethod
    def parse(cls, text: str) -> Backend:
        aliases = {"hm": cls.HONEST_MAJORITY, "dm": cls.DISHONEST_MAJORITY}
        return aliases.get(text) or cls(text)


ARITH = "arith"
BOOL = "bool"

_DTYPE = {ARITH: np.uint64, BOOL: np.uint8}


def _combine(kind, a, b):
    return a + b if kind == ARITH else a ^ b


class Share:
    """One party's view of a shared array."""

    __slots__ = ("kind",)
    kind: str
    backend: Backend

    @property
    def shape(self) -> tuple[int, ...]:
        return self.components[0].shape

    def _check(self, other) -> None:
        if type(other) is not type(self):
            raise BackendMismatch(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.kind != self.kind:
            raise BackendMismatch(f"cannot combine {self.kind} and {other.kind} shares")

    def __len__(self) -> int:
        return self.shape[0]


class RepShare(Share):
    __slots__ = ("lo", "hi")
    backend = Backend.HONEST_MAJORITY

    def __init__(self, lo: np.ndarray, hi: np.ndarray, kind: str = ARITH):
        self.lo = lo
        self.hi = hi
        self.kind = kind

    @property
    def components(self) -> tuple[np.ndarray, ...]:
        return (self.lo, self.hi)

    def map(self, fn) -> RepShare:
        return RepShare(fn(self.lo), fn(self.hi), self.kind)

    def __getitem__(self, idx) -> RepShare:
        return RepShare(self.lo[idx], self.hi[idx], self.kind)

    def __add__(self, other: RepShare) -> RepShare:
        self._check(other)
        return RepShare(self.lo + other.lo, self.hi + other.hi, ARITH)

    def __sub__(self, other: RepShare) -> RepShare:
        self._check(other)
        return RepShare(self.lo - other.lo, self.hi - other.hi, ARITH)

    def __neg__(self) -> RepShare:
        return RepShare(-self.lo, -self.hi, ARITH)

    def __mul__(self, public) -> RepShare:
        return RepShare(self.lo * public, self.hi * public, ARITH)

    __rmul__ = __mul__

    def __xor__(self, other: RepShare) -> RepShare:
        self._check(other)
        return RepShare(self.lo ^ other.lo, self.hi ^ other.hi, BOOL)

    def __and__(self, public) -> RepShare:
        return RepShare(self.lo & public, self.hi & public, BOOL)


class AddShare(Share):
    __slots__ = ("val",)
    backend = Backend.DISHONEST_MAJORITY

    def __init__(self, val: np.ndarray, kind: str = ARITH):
        self.val = val
        self.kind = kind

    @property
    def components(self) -> tuple[np.ndarray, ...]:
        return (self.val,)

    def map(self, fn) -> AddShare:
        return AddShare(fn(self.val), self.kind)

    def __getitem__(self, idx) -> AddShare:
        return AddShare(self.val[idx], self.kind)

    def __add__(self, other: AddShare) -> AddShare:
        self._check(other)
        return AddShare(self.val + other.val, ARITH)

    def __sub__(self, other: AddShare) -> AddShare:
        self._check(other)
        return AddShare(self.val - other.val, ARITH)

    def __neg__(self) -> AddShare:
        return AddShare(-self.val, ARITH)

    def __mul__(self, public) -> AddShare:
        return AddShare(self.val * public, ARITH)

    __rmul__ = __mul__

    def __xor__(self, other: AddShare) -> AddShare:
        self._check(other)
        return AddShare(self.val ^ other.val, BOOL)

    def __and__(self, public) -> AddShare:
        return AddShare(self.val & public, BOOL)


def concat(shares: Sequence[Share], axis: int = 0) -> Share:
    first = shares[0]
    for s in shares[1:]:
        first._check(s)
    parts = [np.concatenate([s.components[k] for s in shares], axis=axis) for k in range(len(first.components))]
    return type(first)(*parts, kind=first.kind)


def from_components(backend: Backend, components: Sequence[np.ndarray], kind: str) -> Share:
    if backend is Backend.HONEST_MAJORITY:
        return RepShare(components[0], components[1], kind)
    return AddShare(components[0], kind)


def n_components(backend: Backend) -> int:
    return 2 if backend is Backend.HONEST_MAJORITY else 1


def random_elements(rng: np.random.Generator, shape, kind: str) -> np.ndarray:
    if kind == ARITH:
        return rng.integers(0, 1 << 64, size=shape, dtype=np.uint64)
    return rng.integers(0, 2, size=shape, dtype=np.uint8)


def split(secret: np.ndarray, rng: np.random.Generator, kind: str = ARITH) -> list[np.ndarray]:
    """Three uniformly random components that combine to ``secret``."""
    secret = np.asarray(secret, dtype=_DTYPE[kind])
    x0 = random_elements(rng, secret.shape, kind)
    x1 = random_elements(rng, secret.shape, kind)
    if kind == ARITH:
        x2 = secret - x0 - x1
    else:
        x2 = secret ^ x0 ^ x1
    return [x0, x1, x2]


def share(secret, backend: Backend, rng: np.random.Generator, kind: str = ARITH) -> list[Share]:
    """Deal ``secret`` to the three computing parties; element ``i`` goes to party ``i``."""
    xs = split(secret, rng, kind)
    if backend is Backend.HONEST_MAJORITY:
        return [RepShare(xs[i], xs[(i + 1) % N_PARTIES], kind) for i in range(N_PARTIES)]
    return [AddShare(xs[i], kind) for i in range(N_PARTIES)]


def public_share(value, pid: int, backend: Backend, kind: str = ARITH) -> Share:
    """Party ``pid``'s share of a public constant (component 0 carries the value)."""
    value = np.asarray(value, dtype=_DTYPE[kind])
    zero = np.zeros_like(value)
    if backend is Backend.HONEST_MAJORITY:
        lo = value if pid == 0 else zero
        hi = value if pid == 2 else zero
        return RepShare(lo, hi, kind)
    return AddShare(value if pid == 0 else zero, kind)


def open_shares(shares: Sequence[Share | None], backend: Backend) -> np.ndarray:
    """Reconstruct from all three parties' shares.

    Replicated shares hold every component twice; the copies must agree.
    """
    if len(shares) != N_PARTIES or any(s is None for s in shares):
        missing = [i for i in range(N_PARTIES) if i >= len(shares) or shares[i] is None]
        raise MissingContribution(f"no share from parties {missing}")
    for s in shares:
        if s.backend is not backend:
            raise BackendMismatch(f"{type(s).__name__} is not a {backend.value} share")
    kind = shares[0].kind
    if backend is Backend.HONEST_MAJORITY:
        for i in range(N_PARTIES):
            if not np.array_equal(shares[i].hi, shares[(i + 1) % N_PARTIES].lo):
                raise OpenDisagreement(f"component {(i + 1) % N_PARTIES} differs between parties")
        comps = [s.lo for s in shares]
    else:
        comps = [s.val for s in shares]
    return _combine(kind, _combine(kind, comps[0], comps[1]), comps[2])


def reconstruct_pair(a: RepShare, b: RepShare, pid_a: int, pid_b: int) -> np.ndarray:
    """Replicated reconstruction from any two parties' pairs."""
    comps = {pid_a: a.lo, (pid_a + 1) % N_PARTIES: a.hi, pid_b: b.lo, (pid_b + 1) % N_PARTIES: b.hi}
    if len(comps) != N_PARTIES:
        raise MissingContribution("two distinct parties are needed")
    kind = a.kind
    return _combine(kind, _combine(kind, comps[0], comps[1]), comps[2])
