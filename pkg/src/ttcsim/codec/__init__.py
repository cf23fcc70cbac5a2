"""TTC physical and data-link layer: Hamming, framing, TDM, BMC, alignment."""

from .bmc import (
    LineSymbolStream,
    LossOfSignal,
    bmc_decode,
    bmc_encode,
    bmc_encode_at,
    decode_samples,
    level_at,
    max_transition_gap,
)
from .frames import (
    ADDRESSED_BITS,
    BROADCAST_BITS,
    CMD_ERROR_RESET,
    CMD_IDLE,
    CMD_SYNC_MARKER,
    IDLE_FRAME,
    FrameAligner,
    FrameKind,
    TtcFrame,
    frame_align,
    parse_frame,
    read_frames,
    serialize_frame,
    serialize_frames,
    tdm_deinterleave,
    tdm_interleave,
)
from .hamming import DecodeStatus, hamming_decode, hamming_encode

__all__ = [
    "ADDRESSED_BITS",
    "BROADCAST_BITS",
    "CMD_ERROR_RESET",
    "CMD_IDLE",
    "CMD_SYNC_MARKER",
    "DecodeStatus",
    "FrameAligner",
    "FrameKind",
    "IDLE_FRAME",
    "LineSymbolStream",
    "LossOfSignal",
    "TtcFrame",
    "bmc_decode",
    "bmc_encode",
    "bmc_encode_at",
    "decode_samples",
    "frame_align",
    "hamming_decode",
    "hamming_encode",
    "level_at",
    "max_transition_gap",
    "parse_frame",
    "read_frames",
    "serialize_frame",
    "serialize_frames",
    "tdm_deinterleave",
    "tdm_interleave",
]
