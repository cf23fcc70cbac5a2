"""Built-in codec checks and golden-vector comparison used by ``ttcsim codec``."""

from __future__ import annotations

from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np

from ..timebase import ClockModel
from .bmc import bmc_decode, bmc_encode, max_transition_gap
from .frames import (
    BROADCAST_BITS,
    TtcFrame,
    parse_frame,
    serialize_frame,
    tdm_deinterleave,
    tdm_interleave,
)
from .hamming import DecodeStatus, decode_int, encode_int


@dataclass(frozen=True)
class CaseFailure:
    suite: str
    case: str
    detail: str

    def __str__(self) -> str:
        return f"{self.suite}: {self.case}: {self.detail}"


def _hamming_round_trip(rng) -> Iterator[CaseFailure]:
    for p in range(256):
        word = encode_int(p, 8)
        got, st = decode_int(word, 13)
        if got != p or st is not DecodeStatus.OK:
            yield CaseFailure("round_trip", f"(13,8) payload {p:#04x}", f"got {got:#x} {st.name}")
    for p in rng.integers(0, 1 << 31, 2000):
        p = int(p)
        got, st = decode_int(encode_int(p, 31), 38)
        if got != p or st is not DecodeStatus.OK:
            yield CaseFailure("round_trip", f"(38,31) payload {p:#x}", f"got {got:#x} {st.name}")


def _single_flip(rng) -> Iterator[CaseFailure]:
    for p in range(256):
        word = encode_int(p, 8)
        for i in range(13):
            got, st = decode_int(word ^ (1 << i), 13)
            if got != p or st is not DecodeStatus.CORRECTED_SINGLE:
                yield CaseFailure("single_flip", f"(13,8) payload {p:#04x} bit {i}", st.name)
    for p in rng.integers(0, 1 << 31, 500):
        word = encode_int(int(p), 31)
        for i in range(38):
            got, st = decode_int(word ^ (1 << i), 38)
            if got != p or st is not DecodeStatus.CORRECTED_SINGLE:
                yield CaseFailure("single_flip", f"(38,31) payload {int(p):#x} bit {i}", st.name)


def _double_flip(rng) -> Iterator[CaseFailure]:
    for p in range(256):
        word = encode_int(p, 8)
        for i in range(13):
            for j in range(i + 1, 13):
                _, st = decode_int(word ^ (1 << i) ^ (1 << j), 13)
                if st is not DecodeStatus.UNCORRECTABLE:
                    yield CaseFailure("double_flip", f"(13,8) payload {p:#04x} bits {i},{j}", st.name)
    for _ in range(2000):
        p = int(rng.integers(0, 1 << 31))
        i, j = (int(x) for x in rng.choice(38, 2, replace=False))
        _, st = decode_int(encode_int(p, 31) ^ (1 << i) ^ (1 << j), 38)
        if st is not DecodeStatus.UNCORRECTABLE:
            yield CaseFailure("double_flip", f"(38,31) payload {p:#x} bits {i},{j}", st.name)


def _bmc(rng) -> Iterator[CaseFailure]:
    period = 4000
    for trial in range(20):
        bits = rng.integers(0, 2, 5000).astype(np.uint8)
        stream = bmc_encode(bits, initial_level=int(trial & 1), bit_period_ps=period)
        got = bmc_decode(stream, ClockModel(period // 2, period // 4))
        if not np.array_equal(got, bits):
            bad = int(np.flatnonzero(got != bits)[0]) if len(got) == len(bits) else -1
            yield CaseFailure("bmc", f"trial {trial}", f"first mismatch at bit {bad}")
        if max_transition_gap(stream) > period:
            yield CaseFailure("bmc", f"trial {trial}", "transition gap exceeds one bit period")


def _tdm(rng) -> Iterator[CaseFailure]:
    for trial in range(20):
        a = rng.integers(0, 2, 4096).astype(np.uint8)
        b = rng.integers(0, 2, 4096).astype(np.uint8)
        ra, rb = tdm_deinterleave(tdm_interleave(a, b))
        if not (np.array_equal(a, ra) and np.array_equal(b, rb)):
            yield CaseFailure("tdm", f"trial {trial}", "channel mismatch")


SUITES: dict[str, Callable] = {
    "round_trip": _hamming_round_trip,
    "single_flip": _single_flip,
    "double_flip": _double_flip,
    "bmc": _bmc,
    "tdm": _tdm,
}


def run_selftest(seed: int = 0) -> CaseFailure | None:
    """Run every suite; returns the first failing case or ``None``."""
    rng = np.random.default_rng(seed)
    for suite in SUITES.values():
        for failure in suite(rng):
            return failure
    return None


# ----------------------------------------------------------- vector files


def frame_from_hex(text: str) -> TtcFrame:
    """Two hex digits name a broadcast command; longer strings are the 31-bit
    addressed payload ``id << 17 | e << 16 | subaddress << 8 | data``."""
    value = int(text, 16)
    if len(text.removeprefix("0x")) <= 2:
        return TtcFrame.broadcast(value)
    if value >> 31:
        raise ValueError(f"addressed payload {text} exceeds 31 bits")
    return TtcFrame.addressed(value >> 17, (value >> 8) & 0xFF, value & 0xFF, (value >> 16) & 1)


def frame_to_hex_bits(frame: TtcFrame) -> str:
    bits = serialize_frame(frame)
    width = (len(bits) + 3) // 4
    return f"{int(''.join(map(str, bits)), 2):0{width}x}"


def check_vectors(doc: dict) -> CaseFailure | None:
    frames = doc.get("frames")
    expected = doc.get("expected_bits")
    if not isinstance(frames, list) or not isinstance(expected, list) or len(frames) != len(expected):
        raise ValueError("vector file needs equally long 'frames' and 'expected_bits' lists")
    for i, (f_hex, e_hex) in enumerate(zip(frames, expected)):
        frame = frame_from_hex(f_hex)
        got = frame_to_hex_bits(frame)
        if int(got, 16) != int(e_hex, 16):
            return CaseFailure("vector", f"frame {i}", f"expected {e_hex}, got {got}")
        parsed, st = parse_frame(serialize_frame(frame))
        if parsed != frame or st is not DecodeStatus.OK:
            return CaseFailure("vector", f"frame {i}", f"does not parse back ({st.name})")
    return None


def idle_vector() -> dict:
    """The broadcast idle command: all-zero payload and check bits."""
    frame = TtcFrame.broadcast(0)
    assert frame.nbits == BROADCAST_BITS
    return {"frames": ["00"], "expected_bits": [frame_to_hex_bits(frame)]}
