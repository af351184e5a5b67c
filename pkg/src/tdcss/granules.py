"""Fixed-width data granules and the XOR algebra over them.

Granule indices are 1-based, as in task index sets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable

from .errors import UnsupportedParameters

_HEADER = struct.Struct(">Q")


def xor_bytes(*parts: bytes) -> bytes:
    """Bytewise XOR of equal-length strings."""
    if not parts:
        raise ValueError("nothing to XOR")
    width = len(parts[0])
    acc = int.from_bytes(parts[0], "big")
    for p in parts[1:]:
        if len(p) != width:
            raise ValueError("XOR operands differ in length")
        acc ^= int.from_bytes(p, "big")
    return acc.to_bytes(width, "big")


@dataclass(frozen=True)
class GranuleSet:
    granules: tuple[bytes, ...]
    ell: int

    def __post_init__(self):
        _check_ell(self.ell)
        if not self.granules:
            raise ValueError("a granule set needs at least one granule")
        if any(len(g) * 8 != self.ell for g in self.granules):
            raise ValueError(f"every granule must be exactly {self.ell} bits")

    def __len__(self):
        return len(self.granules)

    def __getitem__(self, w: int) -> bytes:
        return self.granules[self._index(w)]

    def _index(self, w: int) -> int:
        if not 1 <= w <= len(self.granules):
            raise IndexError(f"granule index {w} outside 1..{len(self.granules)}")
        return w - 1


def _check_ell(ell: int) -> None:
    if ell < 64 or ell % 8:
        raise UnsupportedParameters("granule length must be >= 64 bits and a multiple of 8")


def split_payload(data: bytes, ell: int) -> GranuleSet:
    """8-byte length header + data, zero padded, cut into ell-bit granules."""
    _check_ell(ell)
    width = ell // 8
    framed = _HEADER.pack(len(data)) + bytes(data)
    framed += bytes(-len(framed) % width)
    return GranuleSet(tuple(framed[i:i + width] for i in range(0, len(framed), width)), ell)


def join_payload(gs: GranuleSet) -> bytes:
    framed = b"".join(gs.granules)
    (length,) = _HEADER.unpack_from(framed)
    if length > len(framed) - _HEADER.size:
        raise ValueError("length header exceeds granule data")
    return framed[_HEADER.size:_HEADER.size + length]


def xor_all(gs: GranuleSet) -> bytes:
    return xor_bytes(*gs.granules)


def xor_except(gs: GranuleSet, w: int) -> bytes:
    """XOR of every granule but ``w``; the zero string when nothing is left."""
    skip = gs._index(w)
    rest = [g for i, g in enumerate(gs.granules) if i != skip]
    return xor_bytes(*rest) if rest else bytes(gs.ell // 8)


def check_indices(gs: GranuleSet, indices: Iterable[int]) -> tuple[int, ...]:
    """Validate a granule index set; returns it sorted."""
    out = tuple(sorted(set(indices)))
    if not out:
        raise ValueError("granule index set is empty")
    for w in out:
        gs._index(w)
    return out
