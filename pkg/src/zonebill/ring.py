"""Arithmetic in Z_{2^64} and fixed-point money.

Every secret value lives in the ring of integers modulo 2^64. Signed quantities
(deviations, bills) use the two's-complement reading, so negation and
subtraction need no special casing. Money is an integer number of
micro-units (``SCALE = 10**6`` per currency unit); prices are micro-units per
Wh, so ``energy_wh * price`` is already a money amount with no rescaling.

The scalar helpers operate on Python ints. The ``*_array`` helpers are the
numpy counterparts used by the MPC engine; ``uint64`` arrays wrap silently.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

from .errors import ZeroDenominator

BITS = 64
MODULUS = 1 << BITS
MASK = MODULUS - 1
SIGNED_MIN = -(1 << (BITS - 1))
SIGNED_MAX = (1 << (BITS - 1)) - 1

SCALE = 10**6


def to_ring(x: int) -> int:
    return x & MASK


def signed(x: int) -> int:
    x &= MASK
    return x - MODULUS if x >> (BITS - 1) else x


def ring_add(a: int, b: int) -> int:
    return (a + b) & MASK


def ring_sub(a: int, b: int) -> int:
    return (a - b) & MASK


def ring_mul(a: int, b: int) -> int:
    return (a * b) & MASK


def ring_neg(a: int) -> int:
    return -a & MASK


@dataclass(frozen=True, order=True)
class RingValue:
    """An element of Z_{2^64}; ``raw`` is always in ``[0, 2^64)``."""

    raw: int

    def __post_init__(self):
        if not 0 <= self.raw < MODULUS:
            object.__setattr__(self, "raw", self.raw & MASK)

    @classmethod
    def of(cls, x: int) -> RingValue:
        return cls(x & MASK)

    @property
    def signed(self) -> int:
        return signed(self.raw)

    def __add__(self, other: RingValue) -> RingValue:
        return RingValue(ring_add(self.raw, other.raw))

    def __sub__(self, other: RingValue) -> RingValue:
        return RingValue(ring_sub(self.raw, other.raw))

    def __mul__(self, other: RingValue) -> RingValue:
        return RingValue(ring_mul(self.raw, other.raw))

    def __neg__(self) -> RingValue:
        return RingValue(ring_neg(self.raw))

    def __int__(self) -> int:
        return self.raw


# -- numpy views ---------------------------------------------------------------


def to_ring_array(values) -> np.ndarray:
    """Encode signed or unsigned Python ints as a ``uint64`` array."""
    if isinstance(values, np.ndarray):
        if values.dtype == np.uint64:
            return values
        if values.dtype.kind in "iub":
            return values.astype(np.int64).view(np.uint64)
    return np.array([int(v) & MASK for v in np.ravel(values)], dtype=np.uint64).reshape(
        np.shape(values)
    )


def signed_array(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.uint64).view(np.int64)


def ring_scalar(x: int) -> np.uint64:
    return np.uint64(x & MASK)


def bits_of(values: np.ndarray, width: int = BITS) -> np.ndarray:
    """Little-endian bit decomposition, shape ``values.shape + (width,)``, dtype uint8."""
    values = np.ascontiguousarray(values, dtype=np.uint64)
    as_bytes = values.astype("<u8").view(np.uint8).reshape(values.shape + (8,))
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :width]


def value_of_bits(bits: np.ndarray) -> np.ndarray:
    """Inverse of :func:`bits_of` for 64-bit decompositions."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != BITS:
        pad = np.zeros(bits.shape[:-1] + (BITS - bits.shape[-1],), dtype=np.uint8)
        bits = np.concatenate([bits, pad], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").reshape(bits.shape[:-1]).astype(np.uint64)


# -- fixed-point money ------------------------------------------------------------


def round_half_away(num: int, den: int) -> int:
    """Exact ``num / den`` rounded to the nearest integer, ties away from zero."""
    if den == 0:
        raise ZeroDenominator("division by zero in public coefficient")
    if den < 0:
        num, den = -num, -den
    q, r = divmod(abs(num), den)
    if 2 * r >= den:
        q += 1
    return q if num >= 0 else -q


def quantize_coefficient(numerator: int, denominator: int) -> int:
    """``numerator / denominator`` as scaled money, rounded once.

    >>> quantize_coefficient(30, 60)
    500000
    >>> quantize_coefficient(1, 3)
    333333
    """
    return round_half_away(numerator * SCALE, denominator)


def public_coefficient(
    total: int, zone_sum: int, zone_total: int, count: int, price_delta: int
) -> int:
    """Per-user deviation charge ``zone_total * (total/zone_sum) / count * price_delta``.

    ``price_delta`` is already scaled, so the result is scaled money. The
    whole product is formed as one exact rational and rounded a single time.
    """
    return round_half_away(total * zone_total * price_delta, zone_sum * count)


def exact_coefficient(
    total: int, zone_sum: int, zone_total: int, count: int, price_delta: int
) -> Fraction:
    if zone_sum * count == 0:
        raise ZeroDenominator("division by zero in public coefficient")
    return Fraction(total * zone_total * price_delta, zone_sum * count)


def parse_money(text: str | int | Decimal) -> int:
    """Decimal currency amount (e.g. ``"0.10"``) to scaled integer micro-units."""
    if isinstance(text, int):
        return text * SCALE
    scaled = (Decimal(str(text)) * SCALE).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return int(scaled)


def format_money(scaled: int) -> str:
    sign = "-" if scaled < 0 else ""
    whole, frac = divmod(abs(scaled), SCALE)
    return f"{sign}{whole}.{frac:06d}"
