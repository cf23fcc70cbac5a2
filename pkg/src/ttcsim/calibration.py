"""Serial-link calibration: eye scan bookkeeping, best sampling point and the
coarse (whole-tick) latency compensation.

The scan itself runs inside the simulation (:func:`eye_scan_process`); the
remaining helpers are pure and work on plain arrays.
"""

from __future__ import annotations

import csv
import functools
import io
import zlib
from collections.abc import Generator, Sequence
from dataclasses import dataclass

import numpy as np

from .channel import MAX_TAP, N_TAPS, TAP_PS
from .codec.frames import TtcFrame
from .codec.hamming import DecodeStatus

SUB_TAP_INC = 0x40
SUB_TAP_DEC = 0x41
SUB_SCAN_BURST = 0x42
SUB_TEST_FRAME = 0x50

DEFAULT_FRAMES_PER_TAP = 200
MAX_FRAMES_PER_BURST = 255  # the burst length travels in one data byte


class NoOpenWindow(ValueError):
    def __init__(self) -> None:
        super().__init__("no open window")


class ScanAborted(RuntimeError):
    def __init__(self, slave_id: int, tap: int) -> None:
        super().__init__(f"slave {slave_id} unresponsive at tap {tap}; scan aborted")
        self.slave_id = slave_id
        self.tap = tap


@dataclass(frozen=True)
class CoarseDelay:
    ticks: int = 0

    def __post_init__(self) -> None:
        if self.ticks < 0:
            raise ValueError("coarse delay cannot be negative")


@dataclass(frozen=True, eq=False)
class EyeScanResult:
    errors_per_tap: np.ndarray
    frames_per_tap: int
    best_tap: int | None
    window: tuple[int, int] | None

    @property
    def width(self) -> int:
        return 0 if self.window is None else self.window[1] - self.window[0] + 1

    @property
    def open(self) -> bool:
        return self.best_tap is not None

    @classmethod
    def from_errors(cls, errors: Sequence[int], frames_per_tap: int) -> EyeScanResult:
        err = np.asarray(errors, dtype=np.int64)
        if err.shape != (N_TAPS,):
            raise ValueError(f"need {N_TAPS} error counts")
        if (err < 0).any() or (err > frames_per_tap).any():
            raise ValueError("error counts must lie in [0, frames_per_tap]")
        win = widest_zero_run(err)
        best = None if win is None else (win[0] + win[1]) // 2
        return cls(err, frames_per_tap, best, win)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tap", "errors", "frames"])
        for tap, e in enumerate(self.errors_per_tap):
            w.writerow([tap, int(e), self.frames_per_tap])
        return buf.getvalue()


def widest_zero_run(errors: Sequence[int]) -> tuple[int, int] | None:
    """``(first, last)`` of the longest run of zero counts; earliest wins ties."""
    best: tuple[int, int] | None = None
    start = None
    err = list(errors) + [1]
    for i, e in enumerate(err):
        if e == 0:
            if start is None:
                start = i
        elif start is not None:
            if best is None or (i - 1 - start) > (best[1] - best[0]):
                best = (start, i - 1)
            start = None
    return best


def best_tap(errors: Sequence[int]) -> int:
    """Floor midpoint of the widest zero-error run of taps."""
    win = widest_zero_run(errors)
    if win is None:
        raise NoOpenWindow()
    return (win[0] + win[1]) // 2


def coarse_compensate(measured_latency_ps: int, period_ps: int) -> CoarseDelay:
    """Whole number of clock periods nearest to the latency (halves round up)."""
    if measured_latency_ps < 0:
        raise ValueError("measured latency must be non-negative")
    if period_ps <= 0:
        raise ValueError("period must be positive")
    return CoarseDelay((measured_latency_ps + period_ps // 2) // period_ps)


def balance_coarse(tap_ps: int, cdr_latency_ps: int, period_ps: int) -> tuple[CoarseDelay, CoarseDelay]:
    """Coarse delays ``(slave downstream, master upstream)`` for one link.

    The upstream fine delay and the downstream CDR latency are both known
    after calibration; their difference enters the offset estimate as a
    spurious asymmetry, so it is cancelled on whichever side has to lag.
    """
    imbalance = tap_ps - cdr_latency_ps
    if imbalance >= 0:
        return coarse_compensate(imbalance, period_ps), CoarseDelay(0)
    return CoarseDelay(0), coarse_compensate(-imbalance, period_ps)


def tap_commands(current: int, target: int) -> list[int]:
    """Subaddresses (INC/DEC) that walk the fine delay from ``current`` to ``target``."""
    for name, v in (("current", current), ("target", target)):
        if not 0 <= v <= MAX_TAP:
            raise ValueError(f"{name} tap {v} outside [0, {MAX_TAP}]")
    step = SUB_TAP_INC if target > current else SUB_TAP_DEC
    return [step] * abs(target - current)


def scan_pattern(slave_id: int, burst_index: int, n: int) -> list[int]:
    """Pseudo-random data bytes of one scan burst, known to both ends."""
    key = zlib.crc32(f"scan:{slave_id}:{burst_index}".encode())
    return [int(b) for b in np.random.default_rng(key).integers(0, 256, n)]


@functools.lru_cache(maxsize=4096)
def _scan_frames(slave_id: int, burst_index: int, n: int) -> tuple[TtcFrame, ...]:
    return tuple(
        TtcFrame.addressed(slave_id, SUB_TEST_FRAME, d) for d in scan_pattern(slave_id, burst_index, n)
    )


def scan_frames(slave_id: int, burst_index: int, n: int) -> list[TtcFrame]:
    return list(_scan_frames(slave_id, burst_index, n))


def count_frame_errors(received, expected: Sequence[TtcFrame]) -> int:
    """Frames not received bit-exact with status Ok; ``received`` is
    ``[(frame, status), ...]`` in arrival order, possibly truncated."""
    good = 0
    for (frame, status), want in zip(received, expected):
        if status is DecodeStatus.OK and frame == want:
            good += 1
    return len(expected) - good


def expected_window_taps(period_ps: int, closure_ps: float, sigma_ps: float, k: float = 3.0) -> float:
    """Open-eye width in taps for a given closure and combined edge jitter."""
    return max(0.0, period_ps - closure_ps - 2 * k * sigma_ps) / TAP_PS


def eye_scan_process(ops, slave_id: int, frames_per_tap: int = DEFAULT_FRAMES_PER_TAP) -> Generator:
    """Master-side scan procedure, run as a simulation process.

    ``ops`` supplies ``tracked_tap(slave)`` and ``scan_step(slave, commands,
    frames)``; the latter sends tap commands plus a burst request and returns
    a future resolving to the upstream error count (``None`` on timeout).
    The procedure first walks the slave down to tap 0, then steps up one tap
    at a time.
    """
    if not 1 <= frames_per_tap <= MAX_FRAMES_PER_BURST:
        raise ValueError(f"frames_per_tap must lie in [1, {MAX_FRAMES_PER_BURST}]")
    errors: list[int] = []
    for tap in range(N_TAPS):
        if tap == 0:
            cmds = tap_commands(ops.tracked_tap(slave_id), 0)
        else:
            cmds = [SUB_TAP_INC]
        n_err = yield ops.scan_step(slave_id, cmds, frames_per_tap)
        if n_err is None:
            raise ScanAborted(slave_id, tap)
        errors.append(int(n_err))
    return EyeScanResult.from_errors(errors, frames_per_tap)


def eye_scan(sim, slave_id: int, frames_per_tap: int = DEFAULT_FRAMES_PER_TAP) -> EyeScanResult:
    """Run a stand-alone scan on a brought-up simulation handle."""
    return sim.rescan(slave_id, frames_per_tap)
