from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bmc_bits_from_levels, bmc_levels
from ttcsim.channel import ChannelModel, Direction, propagate
from ttcsim.codec.bmc import (
    LineSymbolStream,
    LossOfSignal,
    bmc_decode,
    bmc_encode,
    decode_samples,
    level_at,
    max_transition_gap,
)
from ttcsim.codec.frames import (
    IDLE_FRAME,
    TtcFrame,
    idle_channel_a,
    read_frames,
    serialize_frames,
    tdm_deinterleave,
    tdm_interleave,
)
from ttcsim.timebase import ClockModel

PERIOD = 4000
RX = ClockModel(PERIOD // 2, PERIOD // 4)  # one sample per half-cell, mid-symbol


def half_cell_levels(stream: LineSymbolStream, n_bits: int) -> list[int]:
    centers = stream.start_ps + PERIOD // 4 + np.arange(2 * n_bits) * (PERIOD // 2)
    return level_at(stream, centers).tolist()


def test_one_bit_from_low():
    assert half_cell_levels(bmc_encode([1], 0, PERIOD), 1) == [1, 0]


def test_zero_bit_from_low():
    assert half_cell_levels(bmc_encode([0], 0, PERIOD), 1) == [1, 1]


def test_levels_match_definition():
    rng = np.random.default_rng(0)
    for init in (0, 1):
        bits = rng.integers(0, 2, 300)
        assert half_cell_levels(bmc_encode(bits, init, PERIOD), 300) == bmc_levels(bits, init)


def test_all_ones_is_alternating_half_cells():
    stream = bmc_encode([1] * 50, 0, PERIOD)
    levels = half_cell_levels(stream, 50)
    assert all(levels[i] != levels[i + 1] for i in range(99))
    assert bmc_decode(stream, RX).tolist() == [1] * 50


def test_boundary_only_transitions_decode_to_zeros():
    stream = bmc_encode([0] * 50, 1, PERIOD)
    assert np.all(np.diff(stream.times) == PERIOD)
    assert bmc_decode(stream, RX).tolist() == [0] * 50


def test_round_trip_random_streams():
    rng = np.random.default_rng(42)
    for _ in range(200):
        bits = rng.integers(0, 2, 1000).astype(np.uint8)
        assert np.array_equal(bmc_decode(bmc_encode(bits, int(rng.integers(2)), PERIOD), RX), bits)


def test_decode_under_50ps_edge_jitter():
    rng = np.random.default_rng(5)
    bits = rng.integers(0, 2, 200_000).astype(np.uint8)
    stream = bmc_encode(bits, 0, PERIOD)
    noisy = propagate(stream, ChannelModel(edge_jitter_sigma_ps=50.0), Direction.MS, rng)
    assert np.array_equal(bmc_decode(noisy, RX), bits)


def test_transition_gap_at_most_one_bit_period():
    bits = np.random.default_rng(8).integers(0, 2, 100_000)
    assert max_transition_gap(bmc_encode(bits, 0, PERIOD)) <= PERIOD


def test_loss_of_signal():
    stream = bmc_encode([0] * 20, 0, PERIOD)
    dead = LineSymbolStream(np.array([], dtype=np.int64), 0, PERIOD, stream.start_ps, stream.end_ps)
    with pytest.raises(LossOfSignal):
        bmc_decode(dead, RX)


def test_decoder_needs_double_rate_clock():
    with pytest.raises(ValueError):
        bmc_decode(bmc_encode([1, 0], 0, PERIOD), ClockModel(PERIOD))


def test_decode_samples_finds_cell_phase():
    levels = bmc_levels([1, 0, 0, 1, 1, 0, 1, 0, 0, 0], 0)
    bits, phase = decode_samples(np.array([levels[0]] + levels[:-1]))  # one-sample lead
    assert phase == 1
    assert bits.tolist()[:9] == [1, 0, 0, 1, 1, 0, 1, 0, 0]
    assert decode_samples(np.array(levels))[0].tolist() == bmc_bits_from_levels(levels)


def test_full_stack_round_trip():
    frames = [IDLE_FRAME, TtcFrame.addressed(12, 0x10, 0xAB), TtcFrame.broadcast(2), IDLE_FRAME]
    b = serialize_frames(frames)
    line = tdm_interleave(idle_channel_a(len(b)), b)
    clk = ClockModel(PERIOD // 4, PERIOD // 8)  # half-cells of a TDM bit of 2 symbols
    stream = bmc_encode(line, 0, PERIOD // 2)
    decoded = bmc_decode(propagate(stream, ChannelModel(400_000, 0), Direction.MS), clk)
    _, rb = tdm_deinterleave(decoded)
    assert [f for _, f, _ in read_frames(rb)] == frames


@given(st.lists(st.integers(0, 1), min_size=1, max_size=400), st.integers(0, 1))
def test_round_trip_property(bits, init):
    assert bmc_decode(bmc_encode(bits, init, PERIOD), RX).tolist() == bits


@given(st.lists(st.integers(0, 1), min_size=1, max_size=400))
def test_boundary_transition_every_cell(bits):
    stream = bmc_encode(bits, 0, PERIOD)
    boundaries = stream.start_ps + np.arange(len(bits)) * PERIOD
    assert np.isin(boundaries, stream.times).all()
    assert max_transition_gap(stream) <= PERIOD
