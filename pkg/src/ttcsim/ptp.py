"""Delay request-response offset correction over the TTC link.

Master and slave are pure step functions ``(state, event) -> (state,
actions)``.  The simulation engine owns the states, feeds events in time
order and carries out the returned actions.

Message mapping onto TTC frames:

* sync: addressed select frame (subaddress ``0x01``) naming the slave, a
  broadcast marker frame (command ``0x02``) whose start bit is the
  timestamp point, then six addressed frames ``0x10..0x15`` carrying t1_g;
* delay_req: one addressed frame from the slave, subaddress ``0x30``,
  data ``0x00``; its start bit is timestamped at both ends;
* delay_resp: six addressed frames ``0x20..0x25`` carrying t4_g.

Timestamps travel MSB first as 48-bit counter values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .codec.frames import CMD_SYNC_MARKER, FrameKind, TtcFrame
from .codec.hamming import DecodeStatus
from .timebase import TICK_BITS, Clock, ClockModel, TickCounter, TimePs, signed_tick_diff, wrap_ticks

SUB_SYNC_SELECT = 0x01
SUB_T1_BASE = 0x10
SUB_T4_BASE = 0x20
SUB_DELAY_REQ = 0x30
TIMESTAMP_BYTES = TICK_BITS // 8

_GOOD = (DecodeStatus.OK, DecodeStatus.CORRECTED_SINGLE)


def compute_offset(t1_g: int, t2_l: int, t3_l: int, t4_g: int) -> int:
    """Half the sum of the two timestamp differences, rounded toward -inf.

    Differences are taken modulo the 48-bit counter width; the halving is an
    arithmetic right shift.
    """
    return (signed_tick_diff(t1_g, t2_l) + signed_tick_diff(t4_g, t3_l)) >> 1


def timestamp_capture(counter: TickCounter, clock: Clock | ClockModel, event_time: TimePs) -> int:
    """Counter value registered on the first rising edge at or after ``event_time``.

    Used for both ends of a marker: the transmitter passes the instant the
    start bit leaves, the receiver the instant it is registered.
    """
    if isinstance(clock, ClockModel):
        clock = Clock(clock)
    k = clock.first_edge_at_or_after(event_time)
    return wrap_ticks(counter.raw_at_edge(clock, k))


@dataclass(frozen=True)
class PtpExchange:
    t1_g: int
    t2_l: int
    t3_l: int
    t4_g: int

    @property
    def offset(self) -> int:
        return compute_offset(self.t1_g, self.t2_l, self.t3_l, self.t4_g)


def timestamp_frames(slave_id: int, base: int, value: int) -> list[TtcFrame]:
    value = wrap_ticks(value)
    return [
        TtcFrame.addressed(slave_id, base + i, (value >> (8 * (TIMESTAMP_BYTES - 1 - i))) & 0xFF)
        for i in range(TIMESTAMP_BYTES)
    ]


def timestamp_value(data_bytes: tuple[int, ...]) -> int:
    v = 0
    for b in data_bytes:
        v = (v << 8) | b
    return v


def sync_frames(slave_id: int, t1_g: int) -> list[TtcFrame]:
    return [
        TtcFrame.addressed(slave_id, SUB_SYNC_SELECT, 0),
        TtcFrame.broadcast(CMD_SYNC_MARKER),
        *timestamp_frames(slave_id, SUB_T1_BASE, t1_g),
    ]


SYNC_MARKER_INDEX = 1  # position of the timestamped frame in sync_frames()


def delay_req_frame(slave_id: int) -> TtcFrame:
    return TtcFrame.addressed(slave_id, SUB_DELAY_REQ, 0)


def delay_resp_frames(slave_id: int, t4_g: int) -> list[TtcFrame]:
    return timestamp_frames(slave_id, SUB_T4_BASE, t4_g)


# --------------------------------------------------------------- scheduling


@dataclass(frozen=True)
class Schedule:
    slaves: tuple[int, ...]
    cursor: int = 0

    def __post_init__(self) -> None:
        if not self.slaves:
            raise ValueError("empty slave set")

    @property
    def current(self) -> int:
        return self.slaves[self.cursor]

    def advanced(self) -> Schedule:
        return replace(self, cursor=(self.cursor + 1) % len(self.slaves))


def next_slave(schedule: Schedule) -> tuple[int, Schedule]:
    """Round-robin: the slave to serve now and the schedule for the next turn."""
    return schedule.current, schedule.advanced()


# -------------------------------------------------------------- events/actions


@dataclass(frozen=True)
class Timer:
    """Periodic sync slot; ``t1_g`` is the counter value latched on the marker."""

    t1_g: int


@dataclass(frozen=True)
class RxFrame:
    frame: TtcFrame | None
    status: DecodeStatus
    tick: int  # local counter when the frame's start bit was registered
    link: int | None = None  # upstream link the master received it on


@dataclass(frozen=True)
class TxDone:
    tick: int


@dataclass(frozen=True)
class Watchdog:
    now: int


@dataclass(frozen=True)
class Aligned:
    pass


@dataclass(frozen=True)
class EnablePtp:
    pass


@dataclass(frozen=True)
class SendFrames:
    slave_id: int
    frames: tuple[TtcFrame, ...]
    message: str


@dataclass(frozen=True)
class ArmWatchdog:
    deadline: int


@dataclass(frozen=True)
class ApplyOffset:
    offset: int


# ------------------------------------------------------------------- master


class MasterFsm(enum.Enum):
    IDLE = "idle"
    AWAIT_DELAY_REQ = "await_delay_req"


@dataclass(frozen=True)
class MasterState:
    schedule: Schedule
    watchdog_timeout: int
    fsm: MasterFsm = MasterFsm.IDLE
    current_slave: int | None = None
    t1_g: int | None = None
    watchdog_deadline: int | None = None
    exchanges_started: int = 0
    exchanges_completed: int = 0
    watchdog_expiries: int = 0
    anomalies: int = 0


def _master_release(state: MasterState, **changes) -> MasterState:
    return replace(
        state,
        fsm=MasterFsm.IDLE,
        current_slave=None,
        t1_g=None,
        watchdog_deadline=None,
        schedule=state.schedule.advanced(),
        **changes,
    )


def master_step(state: MasterState, event) -> tuple[MasterState, list]:
    if isinstance(event, Timer):
        if state.fsm is not MasterFsm.IDLE:
            return state, []
        slave = state.schedule.current
        deadline = wrap_ticks(event.t1_g + state.watchdog_timeout)
        new = replace(
            state,
            fsm=MasterFsm.AWAIT_DELAY_REQ,
            current_slave=slave,
            t1_g=event.t1_g,
            watchdog_deadline=deadline,
            exchanges_started=state.exchanges_started + 1,
        )
        return new, [
            SendFrames(slave, tuple(sync_frames(slave, event.t1_g)), "sync"),
            ArmWatchdog(deadline),
        ]

    if isinstance(event, RxFrame):
        f = event.frame
        if event.status not in _GOOD or f is None or f.kind is not FrameKind.ADDRESSED:
            return state, []
        if f.subaddress != SUB_DELAY_REQ:
            return state, []
        if (
            state.fsm is not MasterFsm.AWAIT_DELAY_REQ
            or f.receiver_id != state.current_slave
            or (event.link is not None and event.link != state.current_slave)
        ):
            return replace(state, anomalies=state.anomalies + 1), []
        slave = state.current_slave
        new = _master_release(state, exchanges_completed=state.exchanges_completed + 1)
        return new, [SendFrames(slave, tuple(delay_resp_frames(slave, event.tick)), "delay_resp")]

    if isinstance(event, Watchdog):
        if state.fsm is MasterFsm.IDLE or state.watchdog_deadline is None:
            return state, []
        if signed_tick_diff(event.now, state.watchdog_deadline) < 0:
            return state, []
        new = _master_release(
            state,
            watchdog_expiries=state.watchdog_expiries + 1,
            anomalies=state.anomalies + 1,
        )
        return new, []

    raise TypeError(f"unexpected master event {event!r}")


# -------------------------------------------------------------------- slave


class SlaveFsm(enum.Enum):
    UNALIGNED = "unaligned"
    ALIGNED = "aligned"
    GOT_SYNC = "got_sync"
    SENT_DELAY_REQ = "sent_delay_req"
    SYNCHRONIZED = "synchronized"


@dataclass(frozen=True)
class SlaveState:
    slave_id: int
    watchdog_timeout: int
    fsm: SlaveFsm = SlaveFsm.UNALIGNED
    aligned_flag: bool = False
    ptp_enabled: bool = False
    selected: bool = False
    t1_bytes: tuple[int, ...] = ()
    t2_l: int | None = None
    t3_l: int | None = None
    t4_bytes: tuple[int, ...] = ()
    watchdog_deadline: int | None = None
    synchronized_once: bool = False
    last_exchange: PtpExchange | None = None
    exchanges: int = 0
    correction_count: int = 0
    anomalies: int = 0
    history: tuple[int, ...] = field(default=(), repr=False)  # applied offsets

    @property
    def resting(self) -> SlaveFsm:
        return SlaveFsm.SYNCHRONIZED if self.synchronized_once else SlaveFsm.ALIGNED


def _slave_abort(state: SlaveState, anomaly: bool = True) -> SlaveState:
    return replace(
        state,
        fsm=state.resting,
        selected=False,
        t1_bytes=(),
        t2_l=None,
        t3_l=None,
        t4_bytes=(),
        watchdog_deadline=None,
        anomalies=state.anomalies + (1 if anomaly else 0),
    )


def slave_step(state: SlaveState, event) -> tuple[SlaveState, list]:
    if isinstance(event, Aligned):
        if state.aligned_flag:
            return state, []
        return replace(state, aligned_flag=True, fsm=SlaveFsm.ALIGNED), []

    if isinstance(event, EnablePtp):
        if not state.aligned_flag:
            raise ValueError("PTP cannot be enabled before the channel is aligned")
        return replace(state, ptp_enabled=True), []

    if isinstance(event, Watchdog):
        if state.fsm not in (SlaveFsm.GOT_SYNC, SlaveFsm.SENT_DELAY_REQ):
            return state, []
        if signed_tick_diff(event.now, state.watchdog_deadline) < 0:
            return state, []
        return _slave_abort(state), []

    if isinstance(event, TxDone):
        if state.fsm is SlaveFsm.SENT_DELAY_REQ and state.t3_l is None:
            return replace(state, t3_l=event.tick), []
        return state, []

    if not isinstance(event, RxFrame):
        raise TypeError(f"unexpected slave event {event!r}")

    if not (state.aligned_flag and state.ptp_enabled):
        return state, []
    f = event.frame
    if event.status not in _GOOD or f is None:
        return state, []

    if f.kind is FrameKind.BROADCAST:
        if f.command != CMD_SYNC_MARKER or not state.selected:
            return state, []
        # a new sync always restarts the exchange (latest wins)
        deadline = wrap_ticks(event.tick + state.watchdog_timeout)
        return (
            replace(
                _slave_abort(state, anomaly=False),
                fsm=SlaveFsm.GOT_SYNC,
                t2_l=event.tick,
                watchdog_deadline=deadline,
            ),
            [ArmWatchdog(deadline)],
        )

    if f.receiver_id != state.slave_id:
        return state, []
    sub = f.subaddress

    if sub == SUB_SYNC_SELECT:
        return replace(state, selected=True), []

    if SUB_T1_BASE <= sub < SUB_T1_BASE + TIMESTAMP_BYTES:
        if state.fsm is not SlaveFsm.GOT_SYNC or sub - SUB_T1_BASE != len(state.t1_bytes):
            return _slave_abort(state), []
        t1_bytes = state.t1_bytes + (f.data,)
        if len(t1_bytes) < TIMESTAMP_BYTES:
            return replace(state, t1_bytes=t1_bytes), []
        new = replace(state, t1_bytes=t1_bytes, fsm=SlaveFsm.SENT_DELAY_REQ, t3_l=None)
        return new, [SendFrames(state.slave_id, (delay_req_frame(state.slave_id),), "delay_req")]

    if SUB_T4_BASE <= sub < SUB_T4_BASE + TIMESTAMP_BYTES:
        if (
            state.fsm is not SlaveFsm.SENT_DELAY_REQ
            or state.t3_l is None
            or sub - SUB_T4_BASE != len(state.t4_bytes)
        ):
            return _slave_abort(state), []
        t4_bytes = state.t4_bytes + (f.data,)
        if len(t4_bytes) < TIMESTAMP_BYTES:
            return replace(state, t4_bytes=t4_bytes), []
        ex = PtpExchange(
            t1_g=timestamp_value(state.t1_bytes),
            t2_l=state.t2_l,
            t3_l=state.t3_l,
            t4_g=timestamp_value(t4_bytes),
        )
        offset = ex.offset
        done = _slave_abort(state, anomaly=False)
        new = replace(
            done,
            fsm=SlaveFsm.SYNCHRONIZED,
            synchronized_once=True,
            last_exchange=ex,
            exchanges=state.exchanges + 1,
            correction_count=state.correction_count + (1 if offset != 0 else 0),
            history=state.history + (offset,),
        )
        return new, [ApplyOffset(offset)]

    return state, []
