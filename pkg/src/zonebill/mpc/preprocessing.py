"""Input-independent correlated randomness, dealt by a trusted dealer.

A store holds one party's slice of:

* Beaver triples ``(a, b, a*b)`` over Z_{2^64} (additive backend only);
* boolean AND triples (additive backend only; the replicated backend
  multiplies with pseudo-random zero sharing instead);
* comparison masks: a random ring element ``r`` together with boolean
  shares of its 64 bits;
* daBits: one random bit shared in both domains.

Everything is generated from a seed, so the same seed yields the same stores.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import MaskExhausted, TripleExhausted
from ..ring import BITS, bits_of
from .shares import ARITH, BOOL, N_PARTIES, Backend, Share, from_components, n_components, open_shares, share

# AND gates in one comparison: a 6-level (lt, eq) tree over the 63 low bits
# (2 ANDs per merged pair) plus one AND folding in the top-bit equality.
COMPARISON_LOW_BITS = BITS - 1


def _tree_and_gates(width: int) -> int:
    gates = 0
    while width > 1:
        pairs = (width + 1) // 2
        gates += 2 * pairs
        width = pairs
    return gates


AND_GATES_PER_COMPARISON = _tree_and_gates(COMPARISON_LOW_BITS) + 1
COMPARISON_AND_DEPTH = (COMPARISON_LOW_BITS - 1).bit_length() + 1


@dataclass(frozen=True)
class PreprocRequest:
    triples: int = 0
    bit_triples: int = 0
    masks: int = 0
    dabits: int = 0

    def layout(self, backend: Backend) -> list[tuple[str, tuple[int, ...]]]:
        """Wire layout of one party's store: ``(kind, shape)`` per array, in order."""
        out = []
        for kind, count, parts, width in (
            (ARITH, self.triples, 3, None),
            (BOOL, self.bit_triples, 3, None),
            (ARITH, self.masks, 1, None),
            (BOOL, self.masks, 1, BITS),
            (ARITH, self.dabits, 1, None),
            (BOOL, self.dabits, 1, None),
        ):
            shape = (count,) if width is None else (count, width)
            out.extend([(kind, shape)] * (parts * n_components(backend)))
        return out


class PreprocStore:
    """One party's preprocessing material with consume-once cursors."""

    def __init__(
        self,
        backend: Backend,
        triples: tuple[Share, Share, Share],
        bit_triples: tuple[Share, Share, Share],
        masks: tuple[Share, Share],
        dabits: tuple[Share, Share],
    ):
        self.backend = backend
        self.triples = triples
        self.bit_triples = bit_triples
        self.masks = masks
        self.dabits = dabits
        self._cursor = {"triples": 0, "bit_triples": 0, "masks": 0, "dabits": 0}

    def remaining(self, name: str) -> int:
        total = len(getattr(self, name)[0])
        return total - self._cursor[name]

    def _take(self, name: str, n: int, exc):
        start = self._cursor[name]
        items = getattr(self, name)
        if start + n > len(items[0]):
            raise exc(f"{name}: requested {n}, {len(items[0]) - start} left")
        self._cursor[name] = start + n
        return tuple(s[start : start + n] for s in items)

    def take_triples(self, shape) -> tuple[Share, Share, Share]:
        n = int(np.prod(shape))
        return tuple(s.map(lambda c: c.reshape(shape)) for s in self._take("triples", n, TripleExhausted))

    def take_bit_triples(self, shape) -> tuple[Share, Share, Share]:
        n = int(np.prod(shape))
        return tuple(s.map(lambda c: c.reshape(shape)) for s in self._take("bit_triples", n, TripleExhausted))

    def take_masks(self, n: int) -> tuple[Share, Share]:
        return self._take("masks", n, MaskExhausted)

    def take_dabits(self, n: int) -> tuple[Share, Share]:
        return self._take("dabits", n, MaskExhausted)

    def to_arrays(self) -> list[np.ndarray]:
        out = []
        for group in (self.triples, self.bit_triples, self.masks, self.dabits):
            for s in group:
                out.extend(s.components)
        return out

    @classmethod
    def from_arrays(cls, backend: Backend, arrays: list[np.ndarray]) -> PreprocStore:
        k = n_components(backend)
        kinds = [ARITH] * 3 + [BOOL] * 3 + [ARITH, BOOL, ARITH, BOOL]
        shares = [from_components(backend, arrays[i * k : (i + 1) * k], kind) for i, kind in enumerate(kinds)]
        return cls(backend, tuple(shares[0:3]), tuple(shares[3:6]), tuple(shares[6:8]), tuple(shares[8:10]))


def requirements(backend: Backend, triples: int, masks: int) -> PreprocRequest:
    """Material needed for ``triples`` multiplications and ``masks`` comparisons."""
    additive = backend is Backend.DISHONEST_MAJORITY
    return PreprocRequest(
        triples=triples if additive else 0,
        bit_triples=masks * AND_GATES_PER_COMPARISON if additive else 0,
        masks=masks,
        dabits=masks,
    )


def deal(request: PreprocRequest, backend: Backend, seed) -> list[PreprocStore]:
    rng = np.random.default_rng(seed)

    def triple(n, kind):
        if kind == ARITH:
            a = rng.integers(0, 1 << 64, size=n, dtype=np.uint64)
            b = rng.integers(0, 1 << 64, size=n, dtype=np.uint64)
            c = a * b
        else:
            a = rng.integers(0, 2, size=n, dtype=np.uint8)
            b = rng.integers(0, 2, size=n, dtype=np.uint8)
            c = a & b
        return [share(x, backend, rng, kind) for x in (a, b, c)]

    triples = triple(request.triples, ARITH)
    bit_triples = triple(request.bit_triples, BOOL)
    r = rng.integers(0, 1 << 64, size=request.masks, dtype=np.uint64)
    masks = [share(r, backend, rng, ARITH), share(bits_of(r), backend, rng, BOOL)]
    bit = rng.integers(0, 2, size=request.dabits, dtype=np.uint8)
    dabits = [share(bit.astype(np.uint64), backend, rng, ARITH), share(bit, backend, rng, BOOL)]

    return [
        PreprocStore(
            backend,
            tuple(t[p] for t in triples),
            tuple(t[p] for t in bit_triples),
            tuple(m[p] for m in masks),
            tuple(d[p] for d in dabits),
        )
        for p in range(N_PARTIES)
    ]


def deal_preprocessing(
    n_triples: int,
    n_masks: int,
    backend: Backend,
    seed,
    *,
    n_bit_triples: int | None = None,
    n_dabits: int | None = None,
) -> list[PreprocStore]:
    request = requirements(backend, n_triples, n_masks)
    if n_bit_triples is not None or n_dabits is not None:
        request = PreprocRequest(
            request.triples,
            request.bit_triples if n_bit_triples is None else n_bit_triples,
            request.masks,
            request.dabits if n_dabits is None else n_dabits,
        )
    return deal(request, backend, seed)


def self_check(stores: list[PreprocStore], sample: int | None = None) -> None:
    """Dealer self-test: opens (a sample of) the material and checks its correlations."""
    backend = stores[0].backend

    def take(group_name):
        groups = [getattr(s, group_name) for s in stores]
        n = len(groups[0][0])
        sel = slice(None) if sample is None or sample >= n else slice(0, sample)
        return [tuple(x[sel] for x in g) for g in groups]

    tr = take("triples")
    a, b, c = (open_shares([g[k] for g in tr], backend) for k in range(3))
    _require(np.array_equal(a * b, c), "arithmetic triple check failed")
    bt = take("bit_triples")
    a, b, c = (open_shares([g[k] for g in bt], backend) for k in range(3))
    _require(np.array_equal(a & b, c), "boolean triple check failed")
    mk = take("masks")
    r, r_bits = (open_shares([g[k] for g in mk], backend) for k in range(2))
    _require(np.array_equal(bits_of(r), r_bits), "mask bits disagree with mask")
    db = take("dabits")
    arith, boolean = (open_shares([g[k] for g in db], backend) for k in range(2))
    _require(np.array_equal(arith, boolean.astype(np.uint64)), "daBit domains disagree")


def _require(ok: bool, what: str) -> None:
    if not ok:
        raise ValueError(f"dealer self-check: {what}")
