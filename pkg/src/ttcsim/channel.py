"""Twisted-pair link model: propagation delay, edge jitter, eye closure,
the 124-tap fine-delay line and point sampling of the received waveform."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .codec.bmc import LineSymbolStream
from .timebase import PS_PER_NS, TimePs

TAP_PS = 78
TAPS_PER_STAGE = 31
N_STAGES = 4
N_TAPS = 124
MAX_TAP = N_TAPS - 1

DEFAULT_NS_PER_M = 5.0


class Direction(enum.Enum):
    MS = "ms"  # master to slave (downstream)
    SM = "sm"  # slave to master (upstream)


@dataclass(frozen=True)
class DropRule:
    """Suppress the ``occurrence``-th (1-based) PTP ``message`` on this link.

    ``message`` is one of ``sync``, ``delay_req``, ``delay_resp``.
    """

    message: str
    occurrence: int = 1

    def __post_init__(self) -> None:
        if self.message not in ("sync", "delay_req", "delay_resp"):
            raise ValueError(f"unknown message type {self.message!r}")
        if self.occurrence < 1:
            raise ValueError("occurrence is 1-based")


@dataclass(frozen=True)
class ChannelModel:
    delay_ms_ps: int = 0
    delay_sm_ps: int = 0
    edge_jitter_sigma_ps: float = 0.0
    eye_closure_ps: int = 0
    drop: tuple[DropRule, ...] = ()

    def __post_init__(self) -> None:
        for name in ("delay_ms_ps", "delay_sm_ps", "eye_closure_ps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.edge_jitter_sigma_ps < 0:
            raise ValueError("edge_jitter_sigma_ps must be non-negative")

    @property
    def asymmetry_ps(self) -> int:
        return self.delay_ms_ps - self.delay_sm_ps

    def delay(self, direction: Direction) -> int:
        return self.delay_ms_ps if direction is Direction.MS else self.delay_sm_ps


def cable_delay_ps(length_m: float, ns_per_m: float = DEFAULT_NS_PER_M) -> int:
    return round(length_m * ns_per_m * PS_PER_NS)


class TapDelayLine:
    """Cascade of four 31-tap fine-delay primitives used as one 0..123 scale.

    Only relative steps are possible; both ends saturate.
    """

    def __init__(self, tap: int = 0) -> None:
        if not 0 <= tap <= MAX_TAP:
            raise ValueError(f"tap {tap} outside [0, {MAX_TAP}]")
        self.tap = tap

    def __repr__(self) -> str:
        return f"TapDelayLine(tap={self.tap})"

    @property
    def delay_ps(self) -> int:
        return self.tap * TAP_PS

    @property
    def stage_taps(self) -> tuple[int, ...]:
        rest, out = self.tap, []
        for _ in range(N_STAGES):
            out.append(min(rest, TAPS_PER_STAGE))
            rest -= out[-1]
        return tuple(out)

    def increment(self) -> int:
        self.tap = min(self.tap + 1, MAX_TAP)
        return self.tap

    def decrement(self) -> int:
        self.tap = max(self.tap - 1, 0)
        return self.tap


def propagate(
    stream: LineSymbolStream,
    chan: ChannelModel,
    direction: Direction,
    rng: np.random.Generator | None = None,
    extra_delay_ps: int = 0,
) -> LineSymbolStream:
    """Delay every toggle by the direction's latency plus Gaussian edge jitter.

    Toggles reordered by jitter are re-sorted; coincident pairs cancel.  The
    eye closure becomes the stream's uncertainty band.
    """
    delay = chan.delay(direction) + int(extra_delay_ps)
    times = stream.times + delay
    sigma = chan.edge_jitter_sigma_ps
    if sigma > 0 and len(times):
        if rng is None:
            raise ValueError("a jittered channel needs an rng stream")
        times = times + np.rint(rng.standard_normal(len(times)) * sigma).astype(np.int64)
        times = np.sort(times, kind="stable")
        dup = np.flatnonzero(times[1:] == times[:-1])
        if len(dup):
            keep = np.ones(len(times), dtype=bool)
            # drop coincident toggles pairwise, left to right
            i = 0
            while i < len(times) - 1:
                if keep[i] and times[i] == times[i + 1]:
                    keep[i] = keep[i + 1] = False
                    i += 2
                else:
                    i += 1
            times = times[keep]
    return LineSymbolStream(
        times,
        stream.initial_level,
        stream.bit_period_ps,
        stream.start_ps + delay,
        stream.end_ps + delay,
        max(stream.uncertainty_ps, chan.eye_closure_ps),
    )


def apply_tap(stream: LineSymbolStream, line: TapDelayLine | int) -> LineSymbolStream:
    """Uniformly delay the stream by ``tap * 78`` ps."""
    tap = line.tap if isinstance(line, TapDelayLine) else int(line)
    if not 0 <= tap <= MAX_TAP:
        raise ValueError(f"tap {tap} outside [0, {MAX_TAP}]")
    return stream.shifted(tap * TAP_PS)


def suppress(stream: LineSymbolStream, t0: TimePs, t1: TimePs) -> LineSymbolStream:
    """Remove the toggles in ``[t0, t1)`` (a frame lost on the wire)."""
    keep = (stream.times < t0) | (stream.times >= t1)
    return replace(stream, times=stream.times[keep])


def sample(
    stream: LineSymbolStream, t, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Line level at instant(s) ``t``.

    Inside the uncertainty band (``±uncertainty_ps / 2``) of any toggle the
    level is a fair coin flip drawn from ``rng``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.int64))
    times = stream.times
    idx = np.searchsorted(times, t, side="right")
    levels = ((idx + stream.initial_level) & 1).astype(np.uint8)
    if len(times) == 0:
        return levels
    half = stream.uncertainty_ps / 2.0
    prv = times[np.maximum(idx - 1, 0)]
    nxt = times[np.minimum(idx, len(times) - 1)]
    dist = np.minimum(np.abs(nxt - t), np.abs(t - prv))
    marginal = dist <= half
    if marginal.any():
        if rng is None:
            raise ValueError("sampling inside an uncertainty band needs an rng stream")
        levels[marginal] = rng.integers(0, 2, int(marginal.sum()), dtype=np.uint8)
    return levels
