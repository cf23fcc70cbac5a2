"""BiPhase Mark line code.

The line toggles at every bit-cell boundary and additionally in mid-cell for
each ``1`` bit.  A stream is stored as its sorted toggle instants together
with the line level before the first toggle.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from ..timebase import Clock, ClockModel, TimePs


class LossOfSignal(RuntimeError):
    """No boundary transition for more than two bit periods."""


@dataclass(frozen=True, eq=False)
class LineSymbolStream:
    times: np.ndarray  # int64 toggle instants, sorted
    initial_level: int
    bit_period_ps: int
    start_ps: TimePs
    end_ps: TimePs
    uncertainty_ps: int = 0  # full width of the band around each toggle

    @property
    def levels(self) -> np.ndarray:
        """Line level right after each toggle."""
        n = len(self.times)
        return ((np.arange(1, n + 1) + self.initial_level) & 1).astype(np.uint8)

    def shifted(self, delta_ps: int) -> LineSymbolStream:
        return replace(
            self,
            times=self.times + int(delta_ps),
            start_ps=self.start_ps + int(delta_ps),
            end_ps=self.end_ps + int(delta_ps),
        )

    def level_pairs(self) -> list[tuple[int, int]]:
        return [(int(t), int(v)) for t, v in zip(self.times, self.levels)]


def _toggles(bits: np.ndarray, half_edges: np.ndarray) -> np.ndarray:
    n = len(bits)
    ones = bits.astype(bool)
    # boundary i lands after the i boundaries and the mid toggles of earlier ones
    idx = np.arange(n, dtype=np.int64)
    idx[1:] += np.cumsum(bits[:-1], dtype=np.int64)
    out = np.empty(n + int(np.count_nonzero(ones)), dtype=np.int64)
    out[idx] = half_edges[0 : 2 * n : 2]
    out[idx[ones] + 1] = half_edges[1 : 2 * n : 2][ones]
    return out


def bmc_encode(
    bits: Sequence[int], initial_level: int = 0, bit_period_ps: int = 4000, start_ps: TimePs = 0
) -> LineSymbolStream:
    """Encode ``bits`` with ideal (jitter-free) cell timing."""
    if bit_period_ps <= 0:
        raise ValueError("bit_period_ps must be positive")
    b = np.asarray(bits, dtype=np.uint8)
    half = bit_period_ps // 2
    offsets = np.arange(2 * len(b) + 1, dtype=np.int64)
    half_edges = start_ps + (offsets // 2) * bit_period_ps + (offsets % 2) * half
    return bmc_encode_at(b, initial_level, half_edges, bit_period_ps)


def bmc_encode_at(
    bits: Sequence[int], initial_level: int, half_edges: np.ndarray, bit_period_ps: int
) -> LineSymbolStream:
    """Encode with explicit half-cell instants (``2 * len(bits) + 1`` values).

    Used by transmitters whose cell timing follows a real, jittered clock.
    """
    b = np.asarray(bits, dtype=np.uint8)
    half_edges = np.asarray(half_edges, dtype=np.int64)
    if len(half_edges) != 2 * len(b) + 1:
        raise ValueError("need 2 * len(bits) + 1 half-cell instants")
    return LineSymbolStream(
        times=_toggles(b, half_edges),
        initial_level=int(initial_level) & 1,
        bit_period_ps=bit_period_ps,
        start_ps=int(half_edges[0]),
        end_ps=int(half_edges[-1]),
    )


def final_level(stream: LineSymbolStream) -> int:
    return (stream.initial_level + len(stream.times)) & 1


def level_at(stream: LineSymbolStream, t) -> np.ndarray:
    """Line level at instant(s) ``t``; a toggle exactly at ``t`` has happened."""
    idx = np.searchsorted(stream.times, np.asarray(t, dtype=np.int64), side="right")
    return ((idx + stream.initial_level) & 1).astype(np.uint8)


def longest_run(samples: np.ndarray) -> int:
    if len(samples) == 0:
        return 0
    change = np.flatnonzero(np.diff(samples.astype(np.int8)) != 0)
    bounds = np.concatenate(([-1], change, [len(samples) - 1]))
    return int(np.max(np.diff(bounds)))


def decode_samples(samples: np.ndarray, phase: int | None = None) -> tuple[np.ndarray, int]:
    """Decode two-samples-per-cell data.

    ``phase`` selects which sample opens a cell; when ``None`` it is chosen as
    the pairing with the fewest missing boundary transitions.  Returns the
    bits and the phase used.
    """
    s = np.asarray(samples, dtype=np.uint8)
    if phase is None:
        best = None
        for p in (0, 1):
            body = s[p:]
            m = len(body) // 2
            if m < 2:
                viol = 0
            else:
                viol = int(np.count_nonzero(body[1 : 2 * m - 1 : 2] == body[2 : 2 * m : 2]))
            if best is None or viol < best[0]:
                best = (viol, p)
        phase = best[1]
    body = s[phase:]
    m = len(body) // 2
    return (body[0 : 2 * m : 2] ^ body[1 : 2 * m : 2]).astype(np.uint8), phase


def bmc_decode(stream: LineSymbolStream, recovered_clock: Clock | ClockModel) -> np.ndarray:
    """Sample ``stream`` on every edge of ``recovered_clock`` and decode it.

    The recovered clock has to run at twice the cell rate (one edge per
    half-cell).  Raises :class:`LossOfSignal` on a transition-free stretch
    longer than two bit periods.
    """
    clk = recovered_clock if isinstance(recovered_clock, Clock) else Clock(recovered_clock)
    if 2 * clk.period != stream.bit_period_ps:
        raise ValueError("recovered clock must run at twice the bit rate")
    k0 = clk.first_edge_at_or_after(stream.start_ps)
    k1 = clk.first_edge_at_or_after(stream.end_ps)
    edges = clk.edge_times(k0, k1 - k0)
    samples = level_at(stream, edges)
    if longest_run(samples) > 4:
        raise LossOfSignal("missing boundary transition for more than two bit periods")
    bits, _ = decode_samples(samples)
    return bits


def max_transition_gap(stream: LineSymbolStream) -> int:
    """Widest interval without a toggle, stream edges included."""
    pts = np.concatenate(([stream.start_ps], stream.times, [stream.end_ps]))
    return int(np.max(np.diff(pts))) if len(pts) > 1 else 0
