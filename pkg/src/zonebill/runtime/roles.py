"""What each protocol role does, written against an :class:`Endpoint`.

Computing parties run, per trading period:

1. receive the smart-meter tuples ``(id, supplier, zone, [m])`` and the
   market-operator tuples ``(id, [d], [b])`` and join them on the user id;
2. sum deviations and prosumer bits per zone (local, no messages);
3. open the zone tuples ``(t, p, c)``, cross-check them, and derive the
   public zone coefficients;
4. evaluate every user's bill on shares, a chunk of users at a time;

and after the last period

5. send each user's per-period bill shares to the user output gateway and
   each supplier the summed bills of its own customers only.
"""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..billing import GlobalDeviation, UserRecord, ZoneAggregate, compute_weight, zone_coefficient
from ..errors import DuplicateUserId, JoinError, OpenDisagreement, UnauthorizedRecipient, UnknownUser, UnknownZone
from ..mpc.compare import SignMode, flip_by_public, select_sign, sign_bits_from_opened
from ..mpc.engine import (
    OPEN_DEVIATION,
    OPEN_MASKED_BIT,
    OPEN_MASKED_COMPARISON,
    OPEN_ZONE_TUPLE,
    Engine,
    make_engine,
    setup_zero_sharing,
)
from ..mpc.preprocessing import PreprocStore, deal
from ..mpc.rounds import Exchange, Program, gather
from ..mpc.shares import ARITH, Backend, Share, concat, from_components, n_components, share
from ..ring import signed_array, to_ring_array
from .config import (
    COMPUTING_PARTIES,
    LEMO_DEALER,
    PREPROC_DEALER,
    SMART_METER_DEALER,
    USER_OUTPUT,
    ComparisonMode,
    SessionConfig,
)
from .endpoint import Endpoint
from .wire import PHASE_OFFLINE, spec_of

VARIABLE = (ARITH, (-1,))

PHASE_INPUT = 1
PHASE_AGGREGATE = 2
PHASE_WEIGHT = 3
PHASE_BILL = 4
PHASE_OUTPUT = 5


class Directory:
    """Public user directory in the session's canonical order."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.ids = np.array([u.user_id for u in config.users], dtype=np.int64)
        self.position = {u.user_id: i for i, u in enumerate(config.users)}
        zone_index = {z: i for i, z in enumerate(config.zones)}
        self.zone_of = np.array([zone_index[u.zone_id] for u in config.users], dtype=np.int64)
        self.supplier_of = {u.user_id: u.supplier_id for u in config.users}
        self.zone_counts = np.bincount(self.zone_of, minlength=len(config.zones))

    def __len__(self) -> int:
        return len(self.ids)


# -- dealers ---------------------------------------------------------------------


def _dealer_rng(config: SessionConfig, role: int, period: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, role, period])


def smart_meter_dealer(ep: Endpoint, config: SessionConfig, records: Sequence[Sequence[UserRecord]]) -> None:
    for k, period in enumerate(records):
        rng = _dealer_rng(config, SMART_METER_DEALER, k)
        ids = to_ring_array([r.user_id for r in period])
        sids = to_ring_array([r.supplier_id for r in period])
        zids = to_ring_array([r.zone_id for r in period])
        m = share(to_ring_array([r.m for r in period]), config.backend, rng)
        with ep.in_phase(PHASE_INPUT):
            ep.exchange(Exchange(send={cp: [ids, sids, zids, *m[cp].components] for cp in COMPUTING_PARTIES}))


def lemo_dealer(ep: Endpoint, config: SessionConfig, records: Sequence[Sequence[UserRecord]]) -> None:
    for k, period in enumerate(records):
        rng = _dealer_rng(config, LEMO_DEALER, k)
        ids = to_ring_array([r.user_id for r in period])
        d = share(to_ring_array([r.d for r in period]), config.backend, rng)
        b = share(to_ring_array([r.b for r in period]), config.backend, rng)
        with ep.in_phase(PHASE_INPUT):
            ep.exchange(
                Exchange(send={cp: [ids, *d[cp].components, *b[cp].components] for cp in COMPUTING_PARTIES})
            )


def preprocessing_dealer(ep: Endpoint, config: SessionConfig) -> None:
    with ep.in_phase(PHASE_OFFLINE):
        stores = deal(config.preprocessing_request(), config.backend, [config.seed, PREPROC_DEALER])
        ep.exchange(Exchange(send={cp: stores[cp].to_arrays() for cp in COMPUTING_PARTIES}))


# -- computing parties -----------------------------------------------------------


@dataclass
class PartyResult:
    opened: Counter
    deviations: list[GlobalDeviation]
    routing: list[tuple[int, int]]  # (supplier id, user id) per delivered aggregate


def _positions(directory: Directory, ids: np.ndarray, source: str) -> np.ndarray:
    ids = signed_array(ids)
    unique, counts = np.unique(ids, return_counts=True)
    if (counts > 1).any():
        raise DuplicateUserId(f"{source} sent user {int(unique[counts > 1][0])} more than once")
    try:
        return np.array([directory.position[int(i)] for i in ids], dtype=np.int64)
    except KeyError as e:
        raise UnknownUser(f"{source} sent unknown user {e.args[0]}") from None


def join_inputs(
    directory: Directory, backend: Backend, sm: list[np.ndarray], lemo: list[np.ndarray]
) -> tuple[Share, Share, Share]:
    """Merge dealer tuples into shares of ``(m, d, b)`` in directory order.

    Directory users that neither dealer mentions are inactive and get zero
    shares; a user known to only one dealer is a join error.
    """
    k = n_components(backend)
    if len(sm) != 3 + k or len(lemo) != 1 + 2 * k:
        raise JoinError("malformed dealer tuples")
    sm_ids, sids, zids = sm[:3]
    lemo_ids = lemo[0]
    if any(len(a) != len(sm_ids) for a in sm) or any(len(a) != len(lemo_ids) for a in lemo):
        raise JoinError("dealer tuple fields have different lengths")
    sm_pos = _positions(directory, sm_ids, "smart-meter dealer")
    lemo_pos = _positions(directory, lemo_ids, "market operator")
    if not np.array_equal(np.sort(sm_pos), np.sort(lemo_pos)):
        missing = sorted(set(sm_pos.tolist()) ^ set(lemo_pos.tolist()))[0]
        raise UnknownUser(f"user {int(directory.ids[missing])} is known to only one dealer")
    zones = directory.config.zones
    for pos, sid, zid in zip(sm_pos, signed_array(sids), signed_array(zids)):
        user = directory.config.users[pos]
        if int(zid) not in zones or int(zid) != user.zone_id:
            raise UnknownZone(f"user {user.user_id}: zone {int(zid)} does not match the directory")
        if int(sid) != user.supplier_id:
            raise JoinError(f"user {user.user_id}: supplier {int(sid)} does not match the directory")

    n = len(directory)

    def place(pos, comps):
        out = []
        for c in comps:
            full = np.zeros(n, dtype=np.uint64)
            full[pos] = c
            out.append(full)
        return from_components(backend, out, ARITH)

    m = place(sm_pos, sm[3:])
    d = place(lemo_pos, lemo[1 : 1 + k])
    b = place(lemo_pos, lemo[1 + k :])
    return m, d, b


def zone_sums(engine: Engine, directory: Directory, v: Share, d: Share) -> Share:
    """Shares of the stacked zone tuples ``[t | p | c]`` (local additions only)."""
    nz = len(directory.zone_counts)

    def segment_sum(x: np.ndarray) -> np.ndarray:
        out = np.zeros(nz, dtype=np.uint64)
        np.add.at(out, directory.zone_of, x)
        return out

    t = v.map(segment_sum)
    p = d.map(segment_sum)
    c = engine.const(directory.zone_counts.astype(np.uint64)) - p
    return concat([t, p, c])


def open_zone_tuples(engine: Engine, tuples: Share) -> Program:
    """Open the zone tuples, then confirm every party reconstructed the same values."""
    opened = yield from engine.open(tuples, OPEN_ZONE_TUPLE)
    digest = np.frombuffer(hashlib.sha256(opened.tobytes()).digest(), dtype="<u8").astype(np.uint64)
    got = yield Exchange(
        send={p: [digest] for p in engine.peers}, recv={p: [spec_of(digest)] for p in engine.peers}
    )
    for p in engine.peers:
        if not np.array_equal(got[p][0], digest):
            raise OpenDisagreement(f"party {engine.pid} and party {p} opened different zone tuples")
    return opened


def bill_chunk_oblivious(
    engine: Engine, m: Share, d: Share, v: Share, coef, rate_a, rate_b, mode: SignMode
) -> Program:
    """Bills of one chunk with a single secure comparison per user.

    The eligibility bit ``e = [v > 0]`` (or ``[v < 0]``) is turned into
    ``e*d`` without a second multiplication: with a daBit ``(r_a, r_b)`` and
    ``z = e ^ r_b`` public, ``e*d = z*d + (1 - 2z) * (r_a*d)``, and ``r_a*d``
    is computed alongside ``m*d`` in the first round.
    """
    n = len(m)
    r, r_bits = engine.prep.take_masks(n)
    r_arith, r_bool = engine.prep.take_dabits(n)
    md, rd, u = yield from gather(
        engine.mul(m, d), engine.mul(r_arith, d), engine.open(v + r, OPEN_MASKED_COMPARISON)
    )
    neg, zero = yield from sign_bits_from_opened(engine, u, r_bits)
    bit = select_sign(engine, neg, zero, mode)
    z = (yield from engine.open(bit ^ r_bool, OPEN_MASKED_BIT)).astype(np.uint64)
    ed = d * z + rd * (np.uint64(1) - np.uint64(2) * z)
    if mode is SignMode.GT:
        term = ed
    else:
        term = flip_by_public(engine, r_arith, z) - ed
    return m * rate_a - md * rate_b + term * coef


def bill_chunk_reveal(
    engine: Engine, m: Share, d: Share, v: Share, coef, rate_a, rate_b, mode: SignMode
) -> Program:
    """Bills of one chunk with deviations opened and compared in clear."""
    md, opened = yield from gather(engine.mul(m, d), engine.open(v, OPEN_DEVIATION))
    dev = signed_array(opened)
    if mode is SignMode.GT:
        term = d * (dev > 0).astype(np.uint64)
    else:
        term = engine.add_const(-d, 1) * (dev < 0).astype(np.uint64)
    return m * rate_a - md * rate_b + term * coef


def bill_users(
    engine: Engine,
    config: SessionConfig,
    m: Share,
    d: Share,
    v: Share,
    coef: np.ndarray,
    rate_a: np.ndarray,
    rate_b: np.ndarray,
    mode: SignMode,
) -> Program:
    chunk = bill_chunk_oblivious if config.mode is ComparisonMode.OBLIVIOUS else bill_chunk_reveal
    n = len(m)
    step = config.batch_size or n
    parts = []
    for s in range(0, n, step):
        e = min(s + step, n)
        part = yield from chunk(engine, m[s:e], d[s:e], v[s:e], coef[s:e], rate_a[s:e], rate_b[s:e], mode)
        parts.append(part)
    return concat(parts)


def public_rates(directory: Directory, config: SessionConfig, period: int):
    prices = config.prices[period]
    zones = [config.zones[i] for i in directory.zone_of]
    rate_a = to_ring_array([prices.tp + prices.fee_import(z) for z in zones])
    rate_b = to_ring_array([prices.fee_export(z) + prices.fee_import(z) for z in zones])
    return rate_a, rate_b


def computing_party(ep: Endpoint, config: SessionConfig) -> PartyResult:
    pid = ep.role
    backend = config.backend
    directory = Directory(config)
    request = config.preprocessing_request()

    # phase 0: correlated randomness and PRF keys
    with ep.in_phase(PHASE_OFFLINE):
        arrays = ep.recv(PREPROC_DEALER, request.layout(backend))
        prep = PreprocStore.from_arrays(backend, arrays)
        zero = None
        if backend is Backend.HONEST_MAJORITY:
            zero = ep.run(setup_zero_sharing(pid, np.random.default_rng([config.seed, pid, 0x5EED])))
    engine = make_engine(backend, pid, prep, zero)

    k = n_components(backend)
    bills: list[Share] = []
    deviations: list[GlobalDeviation] = []
    for period in range(config.n_periods):
        with ep.in_phase(PHASE_INPUT):
            got = ep.exchange(
                Exchange(recv={SMART_METER_DEALER: [VARIABLE] * (3 + k), LEMO_DEALER: [VARIABLE] * (1 + 2 * k)})
            )
            m, d, b = join_inputs(directory, backend, got[SMART_METER_DEALER], got[LEMO_DEALER])
        with ep.in_phase(PHASE_AGGREGATE):
            v = m - b
            tuples = zone_sums(engine, directory, v, d)
        with ep.in_phase(PHASE_WEIGHT):
            opened = signed_array(ep.run(open_zone_tuples(engine, tuples)))
            nz = config.n_zones
            zones = [
                ZoneAggregate(z, int(opened[i]), int(opened[nz + i]), int(opened[2 * nz + i]))
                for i, z in enumerate(config.zones)
            ]
            g = compute_weight(zones)
            deviations.append(g)
            prices = config.prices[period]
            coef_by_zone = [zone_coefficient(z, g, prices) for z in zones]
            coef = to_ring_array([coef_by_zone[i] for i in directory.zone_of])
        with ep.in_phase(PHASE_BILL):
            rate_a, rate_b = public_rates(directory, config, period)
            mode = SignMode.GT if g.T >= 0 else SignMode.LT
            bills.append(ep.run(bill_users(engine, config, m, d, v, coef, rate_a, rate_b, mode)))

    with ep.in_phase(PHASE_OUTPUT):
        routing = _distribute(ep, config, directory, bills)
    return PartyResult(engine.opened, deviations, routing)


def _distribute(ep: Endpoint, config: SessionConfig, directory: Directory, bills: list[Share]) -> list[tuple[int, int]]:
    ids = to_ring_array(directory.ids)
    send = {USER_OUTPUT: [ids] + [b.components[0] for b in bills]}
    totals = bills[0]
    for b in bills[1:]:
        totals = totals + b
    routing = []
    for supplier in config.suppliers:
        role = config.supplier_role(supplier)
        positions = np.array([directory.position[u] for u in config.customers(supplier)], dtype=np.int64)
        for pos in positions:
            uid = int(directory.ids[pos])
            if directory.supplier_of[uid] != supplier:
                raise UnauthorizedRecipient(f"user {uid} is not a customer of supplier {supplier}")
            routing.append((supplier, uid))
        send[role] = [ids[positions], totals.components[0][positions]]
    ep.exchange(Exchange(send=send))
    return routing


# -- output parties --------------------------------------------------------------


def _collect(ep: Endpoint, n_arrays: int) -> list[list[np.ndarray]]:
    got = ep.exchange(Exchange(recv={cp: [VARIABLE] * n_arrays for cp in COMPUTING_PARTIES}))
    first = got[COMPUTING_PARTIES[0]][0]
    for cp in COMPUTING_PARTIES:
        if not np.array_equal(got[cp][0], first):
            raise OpenDisagreement(f"computing parties disagree on the recipients of role {ep.role}")
    return [got[cp] for cp in COMPUTING_PARTIES]


def _reconstruct(parts: list[list[np.ndarray]], index: int) -> np.ndarray:
    total = parts[0][index]
    for p in parts[1:]:
        total = total + p[index]
    return signed_array(total)


def user_gateway(ep: Endpoint, config: SessionConfig) -> dict[int, list[int]]:
    """Per-user mailboxes: user id -> that user's bill for each period."""
    with ep.in_phase(PHASE_OUTPUT):
        parts = _collect(ep, 1 + config.n_periods)
    ids = signed_array(parts[0][0])
    per_period = [_reconstruct(parts, 1 + k) for k in range(config.n_periods)]
    return {int(uid): [int(p[i]) for p in per_period] for i, uid in enumerate(ids)}


def supplier_output(ep: Endpoint, config: SessionConfig, supplier_id: int) -> dict[int, int]:
    """Summed bills over all periods for this supplier's customers."""
    with ep.in_phase(PHASE_OUTPUT):
        parts = _collect(ep, 2)
    ids = signed_array(parts[0][0])
    own = set(config.customers(supplier_id))
    stray = [int(i) for i in ids if int(i) not in own]
    if stray:
        raise UnauthorizedRecipient(f"supplier {supplier_id} was sent bills of users {stray}")
    totals = _reconstruct(parts, 1)
    return {int(uid): int(t) for uid, t in zip(ids, totals)}
