"""TTC data-link framing: broadcast/addressed frames, TDM and frame alignment.

Bit layouts (MSB first, as transmitted)::

    broadcast (16): start=0 | fmt=0 | command[8] | check[5] | stop=1
    addressed (42): start=0 | fmt=1 | receiver_id[14] | e | subaddress[8]
                    | data[8] | check[7] | stop=11
"""

from __future__ import annotations

import enum
import functools
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from .hamming import DecodeStatus, bits_from_int, decode_int, encode_int, ints_from_bits

BROADCAST_BITS = 16
ADDRESSED_BITS = 42

CMD_IDLE = 0x00
CMD_ERROR_RESET = 0x01
CMD_SYNC_MARKER = 0x02

DEFAULT_ALIGN_REQUIRED = 3


class FrameKind(enum.Enum):
    BROADCAST = "broadcast"
    ADDRESSED = "addressed"


@dataclass(frozen=True)
class TtcFrame:
    kind: FrameKind
    command: int = 0
    receiver_id: int = 0
    e_flag: int = 0
    subaddress: int = 0
    data: int = 0

    @classmethod
    def broadcast(cls, command: int) -> TtcFrame:
        return cls(FrameKind.BROADCAST, command=command)

    @classmethod
    def addressed(cls, receiver_id: int, subaddress: int, data: int, e_flag: int = 0) -> TtcFrame:
        return cls(
            FrameKind.ADDRESSED,
            receiver_id=receiver_id,
            e_flag=e_flag,
            subaddress=subaddress,
            data=data,
        )

    @property
    def nbits(self) -> int:
        return BROADCAST_BITS if self.kind is FrameKind.BROADCAST else ADDRESSED_BITS

    def payload(self) -> int:
        if self.kind is FrameKind.BROADCAST:
            return self.command
        return (self.receiver_id << 17) | (self.e_flag << 16) | (self.subaddress << 8) | self.data

    def validate(self) -> None:
        if self.kind is FrameKind.BROADCAST:
            fields = {"command": (self.command, 8)}
        else:
            fields = {
                "receiver_id": (self.receiver_id, 14),
                "e_flag": (self.e_flag, 1),
                "subaddress": (self.subaddress, 8),
                "data": (self.data, 8),
            }
        for name, (value, width) in fields.items():
            if not 0 <= value < (1 << width):
                raise ValueError(f"field {name}={value} overflows {width} bits")


IDLE_FRAME = TtcFrame.broadcast(CMD_IDLE)


@functools.lru_cache(maxsize=65536)
def frame_to_int(frame: TtcFrame) -> int:
    frame.validate()
    if frame.kind is FrameKind.BROADCAST:
        word = encode_int(frame.payload(), 8)
        return (word << 1) | 1  # start=0, fmt=0 are the leading zeros
    word = encode_int(frame.payload(), 31)
    return (1 << 40) | (word << 2) | 0b11


_IDLE_INT = frame_to_int(IDLE_FRAME)


def serialize_frame(frame: TtcFrame) -> np.ndarray:
    return bits_from_int(frame_to_int(frame), frame.nbits)


def serialize_frames(frames: Sequence[TtcFrame]) -> np.ndarray:
    value, n = 0, 0
    for f in frames:
        value = (value << f.nbits) | frame_to_int(f)
        n += f.nbits
    return bits_from_int(value, n)


def frame_length(start_bits: Sequence[int]) -> int:
    """Length implied by the fmt bit (second bit) of a frame window."""
    return ADDRESSED_BITS if int(start_bits[1]) else BROADCAST_BITS


@functools.lru_cache(maxsize=65536)
def _parse_int(value: int, nbits: int) -> tuple[TtcFrame | None, DecodeStatus]:
    if nbits == BROADCAST_BITS:
        if value >> 15 or not value & 1:
            return None, DecodeStatus.BAD_FRAMING
        payload, status = decode_int((value >> 1) & 0x1FFF, 13)
        if status is DecodeStatus.UNCORRECTABLE:
            return None, status
        return TtcFrame.broadcast(payload), status
    if value >> 41 or value & 0b11 != 0b11:
        return None, DecodeStatus.BAD_FRAMING
    payload, status = decode_int((value >> 2) & ((1 << 38) - 1), 38)
    if status is DecodeStatus.UNCORRECTABLE:
        return None, status
    frame = TtcFrame.addressed(
        receiver_id=payload >> 17,
        e_flag=(payload >> 16) & 1,
        subaddress=(payload >> 8) & 0xFF,
        data=payload & 0xFF,
    )
    return frame, status


def parse_frame(bits: Sequence[int]) -> tuple[TtcFrame | None, DecodeStatus]:
    """Parse the frame starting at ``bits[0]``; the fmt bit selects the length.

    Returns ``(None, BAD_FRAMING)`` for start/stop violations or a truncated
    window and ``(None, UNCORRECTABLE)`` when the Hamming check fails.
    """
    if len(bits) < 2:
        return None, DecodeStatus.BAD_FRAMING
    n = frame_length(bits)
    if len(bits) < n:
        return None, DecodeStatus.BAD_FRAMING
    return _parse_int(ints_from_bits(bits[:n]), n)


def read_frames(bits: Sequence[int]) -> Iterator[tuple[int, TtcFrame | None, DecodeStatus]]:
    """Walk back-to-back frames, yielding ``(offset, frame, status)``.

    Stops after the first framing violation: the frame boundary is lost and
    the receiver has to re-align.
    """
    total = len(bits)
    word = ints_from_bits(bits)
    pos = 0
    while pos + 2 <= total:
        n = ADDRESSED_BITS if (word >> (total - pos - 2)) & 1 else BROADCAST_BITS
        if pos + n > total:
            return
        value = (word >> (total - pos - n)) & ((1 << n) - 1)
        frame, status = _parse_int(value, n)
        yield pos, frame, status
        if status is DecodeStatus.BAD_FRAMING:
            return
        pos += n


def tdm_interleave(ch_a: Sequence[int], ch_b: Sequence[int]) -> np.ndarray:
    """Alternate A and B bits, A first."""
    a = np.asarray(ch_a, dtype=np.uint8)
    b = np.asarray(ch_b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError("channel A and B streams must have equal length")
    out = np.empty(2 * len(a), dtype=np.uint8)
    out[0::2] = a
    out[1::2] = b
    return out


def tdm_deinterleave(stream: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(stream, dtype=np.uint8)
    if len(s) % 2:
        raise ValueError("TDM stream must have even length")
    return s[0::2].copy(), s[1::2].copy()


def idle_channel_a(n: int) -> np.ndarray:
    """Channel A carries no messages: constant idle ones."""
    return np.ones(n, dtype=np.uint8)


def frame_align(
    bits: Sequence[int], window: int | None = None, required: int = DEFAULT_ALIGN_REQUIRED
) -> int | None:
    """Find the bit offset at which ``required`` consecutive idle frames decode Ok.

    ``window`` bounds the candidate offsets searched.  Returns ``None``
    while still searching.
    """
    bits = [int(b) for b in bits]
    idle = _IDLE_INT
    span = BROADCAST_BITS * required
    last = len(bits) - span
    if window is not None:
        last = min(last, window - 1)
    for off in range(0, last + 1):
        ok = True
        for j in range(required):
            p = off + j * BROADCAST_BITS
            if ints_from_bits(bits[p : p + BROADCAST_BITS]) != idle:
                ok = False
                break
        if ok:
            return off
    return None


class FrameAligner:
    """Stateful aligner for one receive direction (channel identification)."""

    def __init__(self, window: int = 4096, required: int = DEFAULT_ALIGN_REQUIRED) -> None:
        self.window = window
        self.required = required
        self.aligned = False
        self.offset: int | None = None
        self._buf: list[int] = []
        self._dropped = 0

    def reset(self) -> None:
        self.aligned = False
        self.offset = None
        self._buf.clear()
        self._dropped = 0

    def feed(self, bits: Sequence[int]) -> int | None:
        self._buf.extend(int(b) for b in bits)
        off = frame_align(self._buf, required=self.required)
        if off is not None:
            self.aligned = True
            self.offset = self._dropped + off
            return self.offset
        keep = BROADCAST_BITS * self.required
        if len(self._buf) > keep:
            # only the tail can still start an alignment
            self._dropped += len(self._buf) - keep
            self._buf = self._buf[-keep:]
        return None

    @property
    def searching(self) -> bool:
        return not self.aligned and self._dropped + len(self._buf) < self.window
