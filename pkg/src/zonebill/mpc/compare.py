"""Oblivious sign test by mask-and-open, and boolean-to-arithmetic conversion.

To learn the sign of a shared ``v`` the parties open ``u = v + r`` for a
preprocessed random ``r`` whose bits are also shared, so that
``v = u - r (mod 2^64)`` with ``u`` public. Then

* ``v < 0``  iff  ``u[63] ^ r[63] ^ (u_low < r_low)``, where ``_low`` are the
  63 low bits (the borrow out of the low bits flips the top bit);
* ``v == 0`` iff  ``u == r``.

Both predicates come out of one comparison tree over the low bits whose
nodes carry ``(lt, eq)`` for their segment; the top-bit equality is folded
in with one more AND. The round count is fixed: one opening plus
``COMPARISON_AND_DEPTH`` AND layers, whatever the value of ``v``.
"""
from __future__ import annotations

import enum

import numpy as np

from ..ring import bits_of
from .engine import OPEN_MASKED_BIT, OPEN_MASKED_COMPARISON, Engine
from .preprocessing import COMPARISON_LOW_BITS
from .rounds import Program
from .shares import BOOL, Share, concat


class SignMode(str, enum.Enum):
    GT = "gt"  # 1 iff signed(v) > 0
    LT = "lt"  # 1 iff signed(v) < 0


def _compare_tree(engine: Engine, public_bits: np.ndarray, shared_bits: Share) -> Program:
    """Shares of ``(public < shared, public == shared)`` over little-endian bit columns."""
    lt = shared_bits & (1 - public_bits)
    eq = engine.xor_const(shared_bits, 1 ^ public_bits)
    n = public_bits.shape[0]
    while lt.shape[1] > 1:
        if lt.shape[1] % 2:
            lt = concat([lt, engine.const(np.zeros((n, 1), np.uint8), BOOL)], axis=1)
            eq = concat([eq, engine.const(np.ones((n, 1), np.uint8), BOOL)], axis=1)
        half = lt.shape[1] // 2
        lt_lo, lt_hi = lt[:, 0::2], lt[:, 1::2]
        eq_lo, eq_hi = eq[:, 0::2], eq[:, 1::2]
        # the higher segment decides unless it is equal
        prod = yield from engine.and_(concat([eq_hi, eq_hi], axis=1), concat([lt_lo, eq_lo], axis=1))
        lt = lt_hi ^ prod[:, :half]
        eq = prod[:, half:]
    return lt[:, 0], eq[:, 0]


def sign_bits_from_opened(engine: Engine, u: np.ndarray, r_bits: Share) -> Program:
    """Boolean shares of ``(v < 0, v == 0)`` given public ``u = v + r``."""
    u_bits = bits_of(u)
    low = COMPARISON_LOW_BITS
    lt_low, eq_low = yield from _compare_tree(engine, u_bits[:, :low], r_bits[:, :low])
    top_eq = engine.xor_const(r_bits[:, low], 1 ^ u_bits[:, low])
    is_zero = yield from engine.and_(eq_low, top_eq)
    is_negative = engine.xor_const(lt_low, u_bits[:, low]) ^ r_bits[:, low]
    return is_negative, is_zero


def sign_bits(engine: Engine, v: Share, mask: tuple[Share, Share]) -> Program:
    r, r_bits = mask
    u = yield from engine.open(v + r, OPEN_MASKED_COMPARISON)
    return (yield from sign_bits_from_opened(engine, u, r_bits))


def select_sign(engine: Engine, is_negative: Share, is_zero: Share, mode: SignMode) -> Share:
    if SignMode(mode) is SignMode.LT:
        return is_negative
    # negative and zero are exclusive, so NOT(neg OR zero) = 1 ^ neg ^ zero
    return engine.xor_const(is_negative ^ is_zero, 1)


def secure_sign(engine: Engine, v: Share, mode: SignMode = SignMode.GT, mask=None) -> Program:
    """Boolean share of ``[signed(v) > 0]`` (GT) or ``[signed(v) < 0]`` (LT).

    Consumes one comparison mask per element from the engine's store unless
    ``mask`` is given.
    """
    if mask is None:
        mask = engine.prep.take_masks(len(v))
    neg, zero = yield from sign_bits(engine, v, mask)
    return select_sign(engine, neg, zero, mode)


def bit_to_arith(engine: Engine, bit: Share, dabit=None) -> Program:
    """Arithmetic share of a shared bit, using one daBit ``(r_arith, r_bool)`` per element."""
    if dabit is None:
        dabit = engine.prep.take_dabits(len(bit))
    r_arith, r_bool = dabit
    z = yield from engine.open(bit ^ r_bool, OPEN_MASKED_BIT)
    return flip_by_public(engine, r_arith, z)


def flip_by_public(engine: Engine, r_arith: Share, z: np.ndarray) -> Share:
    """``z XOR r`` for public bits ``z`` and a shared arithmetic bit ``r``: ``z + (1 - 2z) r``."""
    z64 = z.astype(np.uint64)
    return engine.add_const(r_arith * (np.uint64(1) - np.uint64(2) * z64), z64)
