"""Bit-exact encoder and decoder for compression designs.

Layout (little-endian): magic ``GSQC`` | u16 version | u32 N | u32 K | u32 P |
f64 eta | P x (u32 M_i, f64 gamma_i) | u64 dither_seed | u64 trial_seed |
32-byte design hash | u32 payload bit length | payload bytes. The payload is
the mixed-radix integer ``i_0 + M_0 (i_1 + M_1 (i_2 + ...))``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .designs import CompressionDesign, design_hash
from .quantization import index_to_value, quantize_vector_dithered

__all__ = [
    "CompressedSignal",
    "CodecError",
    "pack_indices",
    "unpack_indices",
    "payload_bits",
    "compress",
    "decompress",
    "MAGIC",
    "VERSION",
]

MAGIC = b"GSQC"
VERSION = 1
_HEAD = struct.Struct("<4sHIIId")
_SAMPLE = struct.Struct("<Id")
_SEEDS = struct.Struct("<QQ")
_BITLEN = struct.Struct("<I")
_U32 = 1 << 32


class CodecError(ValueError):
    """Malformed, truncated or mismatched bitstream."""


def payload_bits(levels) -> int:
    """``ceil(log2 prod M_i)``: bits of the largest packed value."""
    return (math.prod(int(m) for m in levels) - 1).bit_length()


def pack_indices(indices, levels) -> int:
    """Mixed-radix value of ``indices`` with radices ``levels`` (first index least significant)."""
    value = 0
    for idx, m in zip(reversed(list(indices)), reversed(list(levels))):
        idx, m = int(idx), int(m)
        if not 0 <= idx < m:
            raise CodecError(f"index {idx} outside [0, {m})")
        value = value * m + idx
    return value


def unpack_indices(value: int, levels) -> list[int]:
    out = []
    for m in levels:
        value, r = divmod(value, int(m))
        out.append(r)
    if value:
        raise CodecError("packed value exceeds the level product")
    return out


@dataclass(frozen=True, eq=True)
class CompressedSignal:
    n: int
    k: int
    levels: tuple
    supports: tuple
    eta: float
    dither_seed: int
    trial_seed: int
    design_hash: bytes
    payload_bitlen: int
    payload: bytes
    version: int = VERSION

    @property
    def p(self) -> int:
        return len(self.levels)

    def to_bytes(self) -> bytes:
        parts = [_HEAD.pack(MAGIC, self.version, self.n, self.k, self.p, self.eta)]
        for m, g in zip(self.levels, self.supports):
            parts.append(_SAMPLE.pack(m, g))
        parts.append(_SEEDS.pack(self.dither_seed, self.trial_seed))
        parts.append(self.design_hash)
        parts.append(_BITLEN.pack(self.payload_bitlen))
        parts.append(self.payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CompressedSignal":
        buf = bytes(buf)
        pos = 0

        def take(nbytes):
            nonlocal pos
            if pos + nbytes > len(buf):
                raise CodecError("truncated bitstream")
            chunk = buf[pos : pos + nbytes]
            pos += nbytes
            return chunk

        magic, version, n, k, p, eta = _HEAD.unpack(take(_HEAD.size))
        if magic != MAGIC:
            raise CodecError("bad magic")
        if version != VERSION:
            raise CodecError(f"unsupported version {version}")
        levels, supports = [], []
        for _ in range(p):
            m, g = _SAMPLE.unpack(take(_SAMPLE.size))
            if m < 1:
                raise CodecError("level count 0 in header")
            levels.append(m)
            supports.append(g)
        dseed, tseed = _SEEDS.unpack(take(_SEEDS.size))
        dhash = take(32)
        (bitlen,) = _BITLEN.unpack(take(_BITLEN.size))
        if bitlen != payload_bits(levels):
            raise CodecError("payload length disagrees with the level counts")
        payload = take((bitlen + 7) // 8)
        if pos != len(buf):
            raise CodecError("trailing bytes after payload")
        return cls(n, k, tuple(levels), tuple(supports), eta, dseed, tseed, dhash, bitlen, payload, version)


def compress(design: CompressionDesign, x, trial_seed: int, *, use_dither: bool = True) -> CompressedSignal:
    """Sample, dither, quantize and pack one graph signal."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != design.n:
        raise ValueError(f"signal has {x.size} entries, design expects {design.n}")
    if np.any(design.levels >= _U32):
        raise CodecError("level counts must fit in 32 bits")
    bank = design.bank
    idx = quantize_vector_dithered(design.psi @ x, bank, trial_seed, use_dither=use_dither)
    value = pack_indices(idx, bank.levels)
    bits = payload_bits(bank.levels)
    payload = value.to_bytes((bits + 7) // 8, "little")
    return CompressedSignal(
        n=design.n,
        k=design.k,
        levels=tuple(int(m) for m in bank.levels),
        supports=tuple(float(g) for g in bank.supports),
        eta=float(design.eta),
        dither_seed=int(design.dither_seed),
        trial_seed=int(trial_seed),
        design_hash=design_hash(design),
        payload_bitlen=bits,
        payload=payload,
    )


def decompress(design: CompressionDesign, cs: CompressedSignal) -> tuple[np.ndarray, np.ndarray]:
    """Unpack indices, map them to cell midpoints and apply the recovery filter.

    Returns ``(c_hat, x_hat)`` with ``x_hat = U_K c_hat``. The dither is not
    subtracted.
    """
    if cs.design_hash != design_hash(design):
        raise CodecError("design hash mismatch")
    if (cs.n, cs.k, cs.p) != (design.n, design.k, design.p):
        raise CodecError("header dimensions do not match the design")
    if len(cs.payload) != (cs.payload_bitlen + 7) // 8:
        raise CodecError("truncated payload")
    value = int.from_bytes(cs.payload, "little")
    if value >> cs.payload_bitlen:
        raise CodecError("payload has bits beyond its declared length")
    idx = np.array(unpack_indices(value, cs.levels), dtype=np.int64)
    vals = index_to_value(idx, np.array(cs.levels), np.array(cs.supports))
    c_hat = design.phi @ vals
    return c_hat, design.basis @ c_hat
