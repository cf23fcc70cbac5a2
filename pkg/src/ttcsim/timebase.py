"""Integer-picosecond time axis, clock models and free-running tick counters.

All simulated time is an ``int`` number of picoseconds.  A clock is described
by an immutable :class:`ClockModel`; the realized (jittered) edge sequence of
a particular oscillator is provided by :class:`Clock`, which draws its noise
from a counter-addressed random stream so that any edge can be queried in any
order and still come out bit-identical for a given seed.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

TimePs = int

PS_PER_NS = 1_000
PS_PER_US = 1_000_000
PS_PER_MS = 1_000_000_000
PS_PER_S = 1_000_000_000_000

TICK_BITS = 48
TICK_MODULUS = 1 << TICK_BITS
_TICK_HALF = 1 << (TICK_BITS - 1)

_JITTER_BLOCK_BITS = 12
_JITTER_BLOCK = 1 << _JITTER_BLOCK_BITS
_BLOCK_BIAS = 1 << 40
_CACHE_BLOCKS = 64


class NodeNotPowered(ValueError):
    """Raised when a counter is read before its node was powered up."""

    def __init__(self) -> None:
        super().__init__("node not powered")


def wrap_ticks(value: int) -> int:
    """Reduce an unbounded tick count to the 48-bit counter range."""
    return value % TICK_MODULUS


def signed_tick_diff(a: int, b: int) -> int:
    """``a - b`` computed modulo 2**48 and sign-extended from bit 47."""
    return ((a - b + _TICK_HALF) % TICK_MODULUS) - _TICK_HALF


def entity_key(name: str) -> int:
    # crc32 rather than hash(): stable across interpreter runs
    return zlib.crc32(name.encode("utf-8"))


def rng_stream(seed: int, *names: str) -> np.random.Generator:
    """Independent generator derived from ``(seed, stable entity names)``."""
    keys = tuple(entity_key(n) for n in names)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=keys))


@dataclass(frozen=True)
class ClockModel:
    """Nominal description of an oscillator.

    ``jitter_sigma_ps`` is the cycle-to-cycle standard deviation, i.e. the
    spread of successive edge-to-edge intervals.  Each edge is perturbed
    independently (white phase noise) by ``jitter_sigma_ps / sqrt(2)``.
    """

    nominal_period_ps: int = 4000
    phase_ps: int = 0
    jitter_sigma_ps: float = 0.0
    ppm_error: float = 0.0

    def __post_init__(self) -> None:
        if int(self.nominal_period_ps) != self.nominal_period_ps or self.nominal_period_ps <= 0:
            raise ValueError("nominal_period_ps must be a positive integer")
        if not 0 <= self.phase_ps < self.nominal_period_ps:
            raise ValueError("phase_ps must lie in [0, nominal_period_ps)")
        if self.jitter_sigma_ps < 0:
            raise ValueError("jitter_sigma_ps must be non-negative")

    @property
    def edge_sigma_ps(self) -> float:
        return self.jitter_sigma_ps / math.sqrt(2.0)


class Clock:
    """A realized oscillator: a :class:`ClockModel` plus its own noise stream.

    Edge ``k`` (any integer) nominally sits at ``phase + k * period``.
    """

    def __init__(self, model: ClockModel, seed: int = 0, entity: str = "clock") -> None:
        self.model = model
        self.seed = seed
        self.entity = entity
        self._key = entity_key(entity)
        self._blocks: dict[int, np.ndarray] = {}
        self._scale = 1.0 + model.ppm_error * 1e-6
        self._last_b: int | None = None
        self._last_blk: np.ndarray | None = None

    def __repr__(self) -> str:
        return f"Clock({self.model!r}, seed={self.seed}, entity={self.entity!r})"

    @property
    def period(self) -> int:
        return self.model.nominal_period_ps

    def _block(self, b: int) -> np.ndarray:
        if b == self._last_b:
            return self._last_blk
        blk = self._blocks.get(b)
        if blk is None:
            if len(self._blocks) >= _CACHE_BLOCKS:
                self._blocks.pop(next(iter(self._blocks)))
            ss = np.random.SeedSequence(self.seed, spawn_key=(self._key, b + _BLOCK_BIAS))
            raw = np.random.default_rng(ss).standard_normal(_JITTER_BLOCK)
            blk = np.rint(raw * self.model.edge_sigma_ps).astype(np.int64)
            self._blocks[b] = blk
        self._last_b, self._last_blk = b, blk
        return blk

    def _nominal(self, k: np.ndarray | int):
        m = self.model
        if m.ppm_error == 0.0:
            return m.phase_ps + k * m.nominal_period_ps
        if isinstance(k, np.ndarray):
            return m.phase_ps + np.rint(k * (m.nominal_period_ps * self._scale)).astype(np.int64)
        return m.phase_ps + round(k * m.nominal_period_ps * self._scale)

    def edge_time(self, k: int) -> TimePs:
        t = self._nominal(k)
        if self.model.jitter_sigma_ps > 0:
            t += int(self._block(k >> _JITTER_BLOCK_BITS)[k & (_JITTER_BLOCK - 1)])
        return int(t)

    def edge_times(self, k0: int, n: int) -> np.ndarray:
        """Times of edges ``k0 .. k0 + n - 1`` as an int64 array."""
        ks = np.arange(k0, k0 + n, dtype=np.int64)
        t = np.asarray(self._nominal(ks), dtype=np.int64)
        if self.model.jitter_sigma_ps > 0 and n:
            b0 = k0 >> _JITTER_BLOCK_BITS
            b1 = (k0 + n - 1) >> _JITTER_BLOCK_BITS
            start = k0 - (b0 << _JITTER_BLOCK_BITS)
            if b0 == b1:
                noise = self._block(b0)
            else:
                noise = np.concatenate([self._block(b) for b in range(b0, b1 + 1)])
            t = t + noise[start : start + n]
        return t

    def nominal_index(self, t: TimePs) -> int:
        """Index of the last nominal (jitter-free) edge at or before ``t``."""
        m = self.model
        return math.floor((t - m.phase_ps) / (m.nominal_period_ps * self._scale))

    def first_edge_at_or_after(self, t: TimePs) -> int:
        k = self.nominal_index(t)
        while self.edge_time(k) >= t:
            k -= 1
        k += 1
        while self.edge_time(k) < t:
            k += 1
        return k

    def last_edge_at_or_before(self, t: TimePs) -> int:
        return self.first_edge_at_or_after(t + 1) - 1


def clock_edges(
    clock: ClockModel, start: TimePs, n: int, seed: int = 0, entity: str = "clock"
) -> list[TimePs]:
    """The ``n`` successive rising-edge times at or after ``start``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    osc = Clock(clock, seed=seed, entity=entity)
    k0 = osc.first_edge_at_or_after(start)
    return [int(t) for t in osc.edge_times(k0, n)]


@dataclass
class TickCounter:
    """Free-running edge counter of one node, with its offset-correction log.

    Reads are edge-inclusive: an edge exactly at the query time is counted.
    Values are kept unbounded internally; :func:`tick_at` returns the 48-bit
    wrapped register value.
    """

    start_time_ps: TimePs
    correction_log: list[tuple[TimePs, int]] = field(default_factory=list)

    def net_correction(self, t: TimePs | None = None) -> int:
        if t is None:
            return sum(o for _, o in self.correction_log)
        return sum(o for at, o in self.correction_log if at <= t)

    def raw_at(self, clock: Clock, t: TimePs) -> int:
        """Unwrapped count at ``t`` (edges in ``[start, t]`` plus corrections)."""
        if t < self.start_time_ps:
            raise NodeNotPowered()
        first = clock.first_edge_at_or_after(self.start_time_ps)
        last = clock.last_edge_at_or_before(t)
        return max(0, last - first + 1) + self.net_correction(t)

    def raw_at_edge(self, clock: Clock, k: int) -> int:
        """Unwrapped count registered on edge ``k`` of ``clock``."""
        return self.raw_at(clock, clock.edge_time(k))

    def edge_for_tick(self, clock: Clock, value: int, after: TimePs | None = None) -> int:
        """Index of the first edge (at or after ``after``) whose raw count equals ``value``."""
        first = clock.first_edge_at_or_after(self.start_time_ps)
        lo = first if after is None else max(first, clock.first_edge_at_or_after(after))
        # piecewise-affine between corrections: count(k) = k - first + 1 + base
        bounds = sorted({at for at, _ in self.correction_log})
        seg_start = lo
        for at in bounds + [None]:
            seg_end = None if at is None else clock.first_edge_at_or_after(at) - 1
            if seg_end is not None and seg_end < seg_start:
                continue
            base = self.net_correction(clock.edge_time(seg_start))
            k = value - 1 - base + first
            if k >= seg_start and (seg_end is None or k <= seg_end):
                return k
            if seg_end is not None:
                seg_start = seg_end + 1
        raise ValueError(f"tick {value} is never reached after the requested time")


def tick_at(counter: TickCounter, clock: Clock | ClockModel, t: TimePs) -> int:
    """48-bit counter value at absolute time ``t``."""
    if isinstance(clock, ClockModel):
        clock = Clock(clock)
    return wrap_ticks(counter.raw_at(clock, t))


def apply_offset(counter: TickCounter, offset: int, at: TimePs) -> TickCounter:
    """Shift every read at or after ``at`` by ``offset`` ticks; returns ``counter``."""
    counter.correction_log.append((at, int(offset)))
    return counter
