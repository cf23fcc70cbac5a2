"""Systematic extended-Hamming (SEC-DED) codes for the two TTC frame payloads.

Codewords are laid out as ``payload bits + check bits``.  The check field is
the Hamming syndrome (LSB first) followed by one overall-parity bit.  Two
codes are supported: (13, 8) for broadcast commands and (38, 31) for
individually addressed frames.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np


class DecodeStatus(enum.Enum):
    OK = "ok"
    CORRECTED_SINGLE = "corrected_single"
    UNCORRECTABLE = "uncorrectable"
    BAD_FRAMING = "bad_framing"


@dataclass(frozen=True)
class _Code:
    k: int  # payload bits
    r: int  # Hamming check bits, overall parity not included
    columns: tuple[int, ...]  # syndrome contributed by payload bit i
    col_to_bit: dict[int, int]

    @property
    def n(self) -> int:
        return self.k + self.r + 1


def _make_code(k: int) -> _Code:
    r = 1
    while (1 << r) < k + r + 1:
        r += 1
    cols = []
    pos = 3
    while len(cols) < k:
        if pos & (pos - 1):
            cols.append(pos)
        pos += 1
    return _Code(k=k, r=r, columns=tuple(cols), col_to_bit={c: i for i, c in enumerate(cols)})


_CODES = {8: _make_code(8), 31: _make_code(31)}
_BY_N = {c.n: c for c in _CODES.values()}

CHECK_BITS = {k: c.r + 1 for k, c in _CODES.items()}


def ints_from_bits(bits: Sequence[int]) -> int:
    """MSB-first bit sequence to integer."""
    if len(bits) <= 64 and not isinstance(bits, np.ndarray):
        v = 0
        for b in bits:
            v = (v << 1) | (int(b) & 1)
        return v
    a = np.asarray(bits, dtype=np.uint8) & 1
    pad = (-len(a)) % 8
    if pad:
        a = np.concatenate((np.zeros(pad, dtype=np.uint8), a))
    return int.from_bytes(np.packbits(a).tobytes(), "big")


def bits_from_int(value: int, width: int) -> np.ndarray:
    """Integer to MSB-first uint8 bit array of ``width`` bits."""
    if width == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = (width + 7) // 8
    raw = np.frombuffer((value & ((1 << width) - 1)).to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[8 * nbytes - width :]


def _syndrome(code: _Code, payload: int) -> int:
    s = 0
    k = code.k
    for i, col in enumerate(code.columns):
        if (payload >> (k - 1 - i)) & 1:
            s ^= col
    return s


def _parity(v: int) -> int:
    return bin(v).count("1") & 1


def encode_int(payload: int, k: int) -> int:
    """Codeword integer (MSB = first payload bit) for a ``k``-bit payload."""
    code = _CODES.get(k)
    if code is None:
        raise ValueError(f"unsupported payload width {k}; expected 8 or 31")
    if payload >> k:
        raise ValueError(f"payload does not fit in {k} bits")
    s = _syndrome(code, payload)
    # check field: syndrome bit j at position j (LSB first), then overall parity
    check = 0
    for j in range(code.r):
        check = (check << 1) | ((s >> j) & 1)
    word = (payload << code.r) | check
    return (word << 1) | _parity(word)


def decode_int(word: int, n: int) -> tuple[int, DecodeStatus]:
    """Decode an ``n``-bit codeword integer; returns ``(payload, status)``."""
    code = _BY_N.get(n)
    if code is None:
        raise ValueError(f"unsupported codeword width {n}; expected 13 or 38")
    overall = _parity(word)
    body = word >> 1
    payload = body >> code.r
    check = body & ((1 << code.r) - 1)
    received = 0
    for j in range(code.r):
        received |= ((check >> (code.r - 1 - j)) & 1) << j
    s = _syndrome(code, payload) ^ received
    if s == 0:
        if overall == 0:
            return payload, DecodeStatus.OK
        return payload, DecodeStatus.CORRECTED_SINGLE  # overall-parity bit itself
    if overall == 0:
        return payload, DecodeStatus.UNCORRECTABLE
    if s & (s - 1) == 0:
        return payload, DecodeStatus.CORRECTED_SINGLE  # a check bit
    i = code.col_to_bit.get(s)
    if i is None:
        return payload, DecodeStatus.UNCORRECTABLE
    return payload ^ (1 << (code.k - 1 - i)), DecodeStatus.CORRECTED_SINGLE


def hamming_encode(payload: Sequence[int], width: int | None = None) -> np.ndarray:
    """Encode an 8- or 31-bit payload into a 13- or 38-bit SEC-DED codeword."""
    k = len(payload) if width is None else width
    if len(payload) != k:
        raise ValueError("payload length does not match width")
    code = _CODES.get(k)
    if code is None:
        raise ValueError(f"unsupported payload width {k}; expected 8 or 31")
    return bits_from_int(encode_int(ints_from_bits(payload), k), code.n)


def hamming_decode(codeword: Sequence[int]) -> tuple[np.ndarray, DecodeStatus]:
    n = len(codeword)
    code = _BY_N.get(n)
    if code is None:
        raise ValueError(f"unsupported codeword width {n}; expected 13 or 38")
    payload, status = decode_int(ints_from_bits(codeword), n)
    return bits_from_int(payload, code.k), status
