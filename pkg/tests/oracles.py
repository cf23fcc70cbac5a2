"""Slow, obviously-correct reference implementations used as test oracles.

None of these import the code under test.
"""

from __future__ import annotations

import itertools
import math


def floor_offset(t1: int, t2: int, t3: int, t4: int) -> int:
    """Half the difference sum with true floor division (no shifts)."""
    return math.floor(((t1 - t2) + (t4 - t3)) / 2)


def count_edges(start: int, t: int, phase: int, period: int) -> int:
    """Brute-force count of edges ``phase + k*period`` in ``[start, t]``."""
    k = (start - phase) // period - 1
    n = 0
    while phase + k * period <= t:
        if phase + k * period >= start:
            n += 1
        k += 1
    return n


def hamming_distance(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


def nearest_codewords(word: int, codebook: dict[int, int]) -> tuple[int, list[int]]:
    """Minimum distance from ``word`` to the codebook and the payloads reaching it."""
    best, who = None, []
    for payload, cw in codebook.items():
        d = hamming_distance(word, cw)
        if best is None or d < best:
            best, who = d, [payload]
        elif d == best:
            who.append(payload)
    return best, who


def bmc_levels(bits, initial_level: int = 0) -> list[int]:
    """Half-cell levels straight from the line-code definition."""
    level, out = initial_level, []
    for b in bits:
        level ^= 1  # boundary transition
        out.append(level)
        if b:
            level ^= 1  # mid-cell transition
        out.append(level)
    return out


def bmc_bits_from_levels(levels) -> list[int]:
    return [int(levels[i] != levels[i + 1]) for i in range(0, len(levels) - 1, 2)]


def widest_zero_run_bruteforce(errors) -> tuple[int, int] | None:
    """All (first, last) zero-runs; widest wins, lowest first on ties."""
    best = None
    n = len(errors)
    for i, j in itertools.combinations_with_replacement(range(n), 2):
        if all(e == 0 for e in errors[i : j + 1]):
            if best is None or (j - i) > (best[1] - best[0]):
                best = (i, j)
    return best


def nearest_ticks(latency: int, period: int) -> int:
    """Whole-period count closest to ``latency``; halves rounded up."""
    q = latency // period
    candidates = (q, q + 1)  # the nearest multiple is one of the bracketing pair
    return min(candidates, key=lambda k: (abs(latency - k * period), -k))


def signed48(x: int) -> int:
    x &= (1 << 48) - 1
    return x - (1 << 48) if x >> 47 else x
