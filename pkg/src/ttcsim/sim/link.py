"""One direction of one cable, from transmitter clock to receiver decoder.

Line timing: each TDM cell (an A bit followed by a B bit) is BMC encoded, so
one channel-B bit occupies four half-cell symbols and every symbol lasts one
clock period.  The transmitter launches symbol ``k`` on its clock edge
``k``; the receiver registers it on edge ``k + delta`` of its own clock.
``delta`` is what channel identification recovers from a window of idle
frames, and a burst decoded with a stale ``delta`` fails framing, which is
how the receiver notices it has to re-identify.

Idle frames between bursts are not simulated symbol by symbol; only the
identification windows and the bursts themselves are put on the wire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ChannelModel, Direction, TapDelayLine, propagate, sample, suppress
from ..codec.bmc import bmc_encode_at, decode_samples
from ..codec.frames import (
    BROADCAST_BITS,
    IDLE_FRAME,
    TtcFrame,
    frame_align,
    read_frames,
    serialize_frames,
    tdm_interleave,
)
from ..codec.hamming import DecodeStatus
from ..timebase import Clock

SYMBOLS_PER_BIT = 4
FRAME_SYMBOLS = BROADCAST_BITS * SYMBOLS_PER_BIT  # one idle frame
MIN_GAP_FRAMES = 8
ID_WINDOW_FRAMES = 7
START_BIT_SYMBOL = 2  # first half of the B cell of a frame's start bit


@dataclass(frozen=True)
class Received:
    """One frame as seen by the receiver's decoder."""

    index: int  # position in the burst
    frame: TtcFrame | None
    status: DecodeStatus
    reg_edge: int  # receiver edge registering the start bit (after coarse delay)
    done_edge: int  # receiver edge on which the last symbol is in


@dataclass(frozen=True)
class Burst:
    start_edge: int
    n_symbols: int
    frame_offsets: tuple[int, ...]  # channel-B bit offsets
    received: tuple[Received, ...]
    lost_sync: bool
    dropped: bool

    def tx_start_bit_edge(self, index: int) -> int:
        return self.start_edge + SYMBOLS_PER_BIT * self.frame_offsets[index] + START_BIT_SYMBOL

    @property
    def end_edge(self) -> int:
        return self.start_edge + self.n_symbols


class Link:
    def __init__(
        self,
        name: str,
        direction: Direction,
        tx_clock: Clock,
        rx_clock: Clock,
        channel: ChannelModel,
        rng: np.random.Generator,
        line_start_edge: int,
        fixed_extra_ps: int = 0,
        tap: TapDelayLine | None = None,
    ) -> None:
        self.name = name
        self.direction = direction
        self.tx = tx_clock
        self.rx = rx_clock
        self.channel = channel
        self.rng = rng
        self.fixed_extra_ps = fixed_extra_ps
        self.tap = tap
        self.delta: int | None = None
        self.coarse_ticks = 0
        self._anchor = line_start_edge  # idle frames are laid out from here
        self._free = line_start_edge  # first edge not yet committed
        self._last_burst_end: int | None = None
        self.sent: dict[str, int] = {}
        self.bursts = 0
        self.identifications = 0

    # ------------------------------------------------------------ timing

    @property
    def extra_delay_ps(self) -> int:
        return self.fixed_extra_ps + (self.tap.delay_ps if self.tap is not None else 0)

    @property
    def total_delay_ps(self) -> int:
        return self.channel.delay(self.direction) + self.extra_delay_ps

    def _grid(self, k: int) -> int:
        rel = k - self._anchor
        return self._anchor + -(-rel // FRAME_SYMBOLS) * FRAME_SYMBOLS

    def plan(self, t: int) -> int:
        """Start edge of the next burst slot at or after time ``t``."""
        k = max(self.tx.first_edge_at_or_after(t), self._free)
        if self._last_burst_end is not None:
            k = max(k, self._last_burst_end + MIN_GAP_FRAMES * FRAME_SYMBOLS)
        return self._grid(k)

    def nominal_delta(self, k: int) -> int:
        arrival = self.tx.edge_time(k) + self.total_delay_ps
        return self.rx.first_edge_at_or_after(arrival) - k

    # -------------------------------------------------------------- wire

    def _waveform(self, k0: int, b_bits: np.ndarray):
        cells = tdm_interleave(np.ones(len(b_bits), dtype=np.uint8), b_bits)
        half_edges = self.tx.edge_times(k0, 2 * len(cells) + 1)
        stream = bmc_encode_at(cells, 0, half_edges, 2 * self.tx.period)
        return propagate(stream, self.channel, self.direction, self.rng, self.extra_delay_ps)

    def _sample_b(self, stream, r0: int, n: int, phase: int | None) -> tuple[np.ndarray, int]:
        levels = sample(stream, self.rx.edge_times(r0, n), self.rng)
        return decode_samples(levels, phase)

    def identify(self, t: int) -> bool:
        """Acquire ``delta`` from a window of idle frames sent at or after ``t``."""
        self.identifications += 1
        k0 = self._grid(max(self.tx.first_edge_at_or_after(t), self._free))
        n_frames = ID_WINDOW_FRAMES
        self._free = k0 + n_frames * FRAME_SYMBOLS
        idle = serialize_frames([IDLE_FRAME] * n_frames)
        stream = self._waveform(k0, idle)
        # the receiver starts listening at an arbitrary point of the first frame
        r0 = self.rx.first_edge_at_or_after(stream.start_ps) + int(self.rng.integers(FRAME_SYMBOLS))
        n = (n_frames - 1) * FRAME_SYMBOLS
        levels = sample(stream, self.rx.edge_times(r0, n), self.rng)
        found = None
        for p in (0, 1):
            cells, _ = decode_samples(levels, p)
            for q in (0, 1):
                off = frame_align(cells[q::2])
                if off is not None:
                    found = r0 + p + 2 * (q + 2 * off) - (k0 + START_BIT_SYMBOL)
                    break
            if found is not None:
                break
        if found is None:
            self.delta = None
            return False
        # frame tracking resolves the ambiguity of one idle-frame period
        nominal = self.nominal_delta(k0)
        found += FRAME_SYMBOLS * round((nominal - found) / FRAME_SYMBOLS)
        self.delta = found
        return True

    def send(self, start_edge: int, frames: list[TtcFrame], message: str | None = None) -> Burst:
        """Put a burst on the wire at ``start_edge`` and decode it at the far end."""
        if start_edge < self._free:
            raise ValueError("burst overlaps an earlier transmission")
        b_bits = serialize_frames(frames)
        offsets, pos = [], 0
        for f in frames:
            offsets.append(pos)
            pos += f.nbits
        n_sym = SYMBOLS_PER_BIT * len(b_bits)
        self._free = start_edge + n_sym
        self._anchor = start_edge + n_sym
        self._last_burst_end = start_edge + n_sym
        self.bursts += 1

        dropped = False
        if message is not None:
            count = self.sent.get(message, 0) + 1
            self.sent[message] = count
            dropped = any(r.message == message and r.occurrence == count for r in self.channel.drop)

        if self.delta is None:
            return Burst(start_edge, n_sym, tuple(offsets), (), True, dropped)
        stream = self._waveform(start_edge, b_bits)
        if dropped:
            stream = suppress(stream, stream.start_ps, stream.end_ps + 1)
        r0 = start_edge + self.delta
        cells, _ = self._sample_b(stream, r0, n_sym, 0)
        b_rx = cells[1::2]
        c = self.coarse_ticks
        received, lost = [], False
        lengths = {o: f.nbits for o, f in zip(offsets, frames)}
        index = {o: i for i, o in enumerate(offsets)}
        for off, frame, status in read_frames(b_rx):
            if status is DecodeStatus.BAD_FRAMING:
                lost = True
            if off not in index:
                # decoder drifted off the transmitted frame boundaries
                lost = True
                break
            n = lengths[off]
            received.append(
                Received(
                    index[off],
                    frame,
                    status,
                    reg_edge=r0 + SYMBOLS_PER_BIT * off + START_BIT_SYMBOL + 1 + c,
                    done_edge=r0 + SYMBOLS_PER_BIT * (off + n) - 1 + c,
                )
            )
            if lost:
                break
        if len(received) < len(frames):
            lost = True
        if lost:
            self.delta = None
        return Burst(start_edge, n_sym, tuple(offsets), tuple(received), lost, dropped)
