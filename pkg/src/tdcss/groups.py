"""Type-III pairing group, hash suite and canonical element encodings.

The backend is RELIC's BLS12-381 through ``petrelic``.  Scalars are plain
Python ints reduced mod the group order.  Every exponentiation and pairing
performed by the scheme goes through :func:`g1_exp`, :func:`g2_exp`,
:func:`gt_exp` and :func:`pair` so that :func:`count_ops` can observe it.
"""

from __future__ import annotations

import hashlib
import struct
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, fields
from functools import lru_cache

from petrelic.multiplicative.pairing import (
    G1,
    G2,
    GT,
    G1Element,
    G2Element,
    GTElement,
)

from .errors import DecodeError, UnsupportedParameters

CURVE = "BLS12-381"
ORDER = int(G1.order())
SCALAR_BYTES = 32
G1_BYTES = 49
G2_BYTES = 97
GT_BYTES = 384
DEFAULT_ELL = 128

# domain-separation tags
_TAG_H = b"TDCSS-V01-h"
_TAG_H1 = b"TDCSS-V01-H1"
_TAG_SENTINEL = b"TDCSS-V01-H1-SENTINEL"
_TAG_H2 = b"TDCSS-V01-H2"
_TAG_H3 = b"TDCSS-V01-H3"

_SUPPORTED = {(128, CURVE)}


@dataclass(frozen=True)
class GroupParams:
    curve: str
    security: int
    order: int
    g1: G1Element
    g2: G2Element
    gt: GTElement  # e(g1, g2), computed once per process

    def identity_gt(self) -> GTElement:
        return GT.unity()


@lru_cache(maxsize=None)
def group_setup(security: int = 128, curve: str = CURVE) -> GroupParams:
    """Return the pairing group for ``security`` bits on ``curve``.

    Generators are the curve's standard fixed generators, so two calls with
    the same arguments return equal parameters.
    """
    if (security, curve) not in _SUPPORTED:
        raise UnsupportedParameters(f"unsupported group: {security}-bit {curve}")
    g1, g2 = G1.generator(), G2.generator()
    return GroupParams(curve, security, ORDER, g1, g2, g1.pair(g2))


# -- operation counting ------------------------------------------------------

@dataclass
class OpCount:
    g1_exp: int = 0
    g2_exp: int = 0
    gt_exp: int = 0
    pairing: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_counters: ContextVar[tuple] = ContextVar("tdcss_op_counters", default=())


@contextmanager
def count_ops():
    """Count group exponentiations and pairings made inside the block.

    Counters nest: an outer block also sees everything an inner one does.
    """
    counter = OpCount()
    token = _counters.set(_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _counters.reset(token)


def _tick(name: str) -> None:
    for c in _counters.get():
        setattr(c, name, getattr(c, name) + 1)


def g1_exp(point: G1Element, k: int) -> G1Element:
    _tick("g1_exp")
    return point ** (k % ORDER)


def g2_exp(point: G2Element, k: int) -> G2Element:
    _tick("g2_exp")
    return point ** (k % ORDER)


def gt_exp(z: GTElement, k: int) -> GTElement:
    _tick("gt_exp")
    return z ** (k % ORDER)


def pair(p: G1Element, q: G2Element) -> GTElement:
    _tick("pairing")
    return p.pair(q)


def g1_identity() -> G1Element:
    return G1.neutral_element()


def g2_identity() -> G2Element:
    return G2.neutral_element()


def random_scalar(rng, nonzero: bool = True) -> int:
    """Uniform scalar in Z_p (or Z_p^* when ``nonzero``)."""
    return rng.randrange(1 if nonzero else 0, ORDER)


# -- canonical encodings -----------------------------------------------------

def encode_scalar(k: int) -> bytes:
    if not 0 <= k < ORDER:
        raise ValueError("scalar out of range")
    return k.to_bytes(SCALAR_BYTES, "big")


def decode_scalar(data: bytes) -> int:
    if len(data) != SCALAR_BYTES:
        raise DecodeError(f"scalar must be {SCALAR_BYTES} bytes, got {len(data)}")
    k = int.from_bytes(data, "big")
    if k >= ORDER:
        raise DecodeError("scalar not reduced mod the group order")
    return k


def encode_element(x) -> bytes:
    """Compressed point for G1/G2, RELIC's packed form for GT."""
    return x.to_binary()


# BLS12-381 base field.  Encodings are screened against it before they reach
# the backend, which prints diagnostics to stdout on malformed input.
FIELD_P = 0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB
_FP_BYTES = 48


def _limbs(data: bytes) -> list[int]:
    return [int.from_bytes(data[i:i + _FP_BYTES], "big") for i in range(0, len(data), _FP_BYTES)]


def _is_square(a: int) -> bool:
    return pow(a % FIELD_P, (FIELD_P - 1) // 2, FIELD_P) != FIELD_P - 1


def _on_curve_x(data: bytes) -> bool:
    """Whether the x coordinate in a compressed point is in range and on the curve."""
    xs = _limbs(data[1:])
    if any(v >= FIELD_P for v in xs):
        return False
    p = FIELD_P
    if len(xs) == 1:                      # G1: y^2 = x^3 + 4
        return _is_square(pow(xs[0], 3, p) + 4)
    a0, a1 = xs                           # G2: y^2 = x^3 + 4(1 + i) over Fp2
    s0, s1 = (a0 * a0 - a1 * a1) % p, 2 * a0 * a1 % p
    c0, c1 = (s0 * a0 - s1 * a1 + 4) % p, (s0 * a1 + s1 * a0 + 4) % p
    return _is_square(c0 * c0 + c1 * c1)   # an Fp2 element is a square iff its norm is


def _decode(cls, data: bytes, width: int, name: str):
    data = bytes(data)
    if len(data) not in (width, 1):
        raise DecodeError(f"{name} encoding must be {width} bytes, got {len(data)}")
    if len(data) == 1 and data != b"\x00":
        raise DecodeError(f"bad {name} identity encoding")
    if len(data) == width and data[0] not in (2, 3):
        raise DecodeError(f"{name} encoding is not a compressed point")
    if len(data) == width and not _on_curve_x(data):
        raise DecodeError(f"{name} encoding is not a point on the curve")
    try:
        elem = cls.from_binary(data)
    except Exception as exc:  # backend raises on some malformed input
        raise DecodeError(f"invalid {name} encoding") from exc
    if data == b"\x00":
        return elem
    if not elem.is_valid() or elem.to_binary() != data:
        raise DecodeError(f"{name} encoding is not a canonical subgroup element")
    return elem


def decode_g1(data: bytes) -> G1Element:
    return _decode(G1Element, data, G1_BYTES, "G1")


def decode_g2(data: bytes) -> G2Element:
    return _decode(G2Element, data, G2_BYTES, "G2")


def decode_gt(data: bytes) -> GTElement:
    data = bytes(data)
    if len(data) != GT_BYTES:
        raise DecodeError(f"GT encoding must be {GT_BYTES} bytes, got {len(data)}")
    if any(v >= FIELD_P for v in _limbs(data)):
        raise DecodeError("GT encoding has an out-of-range coordinate")
    try:
        z = GTElement.from_binary(data)
    except Exception as exc:
        raise DecodeError("invalid GT encoding") from exc
    if not z.is_valid() or z.to_binary() != data:
        raise DecodeError("GT encoding is not a canonical subgroup element")
    return z


# -- hash suite --------------------------------------------------------------

def _frame(*parts: bytes) -> bytes:
    return b"".join(struct.pack(">I", len(p)) + p for p in parts)


def _to_nonzero_scalar(tag: bytes, data: bytes) -> int:
    counter = 0
    while True:
        digest = hashlib.shake_256(_frame(tag, struct.pack(">I", counter), data)).digest(64)
        k = int.from_bytes(digest, "big") % ORDER
        if k:
            return k
        counter += 1


def hash_to_scalar(data: bytes) -> int:
    """h: bytes -> Z_p^*."""
    return _to_nonzero_scalar(_TAG_H, data)


def _as_bytes(label) -> bytes:
    return label.encode("utf-8") if isinstance(label, str) else bytes(label)


def hash_to_g1(label) -> G1Element:
    """H1: bytes -> G1 (RELIC map-to-point of the framed, tagged label)."""
    return G1.hash_to_point(_frame(_TAG_H1, _as_bytes(label)))


def attr_sentinel(universe_size: int) -> G1Element:
    """H1(|U|+1), hashed under its own tag so no attribute name can hit it."""
    return G1.hash_to_point(_frame(_TAG_SENTINEL, str(universe_size + 1).encode()))


def mask_from_gt(z: GTElement, ell: int = DEFAULT_ELL) -> bytes:
    """H2: GT -> {0,1}^ell, returned as ell/8 bytes."""
    if ell <= 0 or ell % 8:
        raise UnsupportedParameters("mask length must be a positive multiple of 8")
    return hashlib.shake_256(_frame(_TAG_H2, encode_element(z))).digest(ell // 8)


def capsule_digest(dci: G2Element, c1: G2Element, c2: bytes, c3, c4) -> int:
    """H3 over (DCI, C1, C2, C3 list, C4 list) with length and count framing."""
    c3, c4 = list(c3), list(c4)
    if not c3 or not c4:
        raise ValueError("C3 and C4 must be non-empty")
    buf = [
        _frame(encode_element(dci), encode_element(c1), bytes(c2)),
        struct.pack(">I", len(c3)), _frame(*(encode_element(x) for x in c3)),
        struct.pack(">I", len(c4)), _frame(*(encode_element(x) for x in c4)),
    ]
    return _to_nonzero_scalar(_TAG_H3, b"".join(buf))


@dataclass(frozen=True)
class HashSuite:
    """The four hash functions bound to a mask length ``ell``."""

    ell: int = DEFAULT_ELL

    def h(self, data: bytes) -> int:
        return hash_to_scalar(data)

    def H1(self, label) -> G1Element:
        return hash_to_g1(label)

    def H2(self, z: GTElement) -> bytes:
        return mask_from_gt(z, self.ell)

    def H3(self, dci, c1, c2, c3, c4) -> int:
        return capsule_digest(dci, c1, c2, c3, c4)
