"""Master, slaves and cables wired into one simulation, plus the bring-up
sequence and the omniscient measurements on the result."""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Generator

import numpy as np

from .. import ptp
from ..calibration import (
    SUB_SCAN_BURST,
    SUB_TAP_DEC,
    SUB_TAP_INC,
    SUB_TEST_FRAME,
    EyeScanResult,
    ScanAborted,
    balance_coarse,
    count_frame_errors,
    eye_scan_process,
    scan_frames,
    tap_commands,
)
from ..channel import MAX_TAP, TAP_PS, Direction, TapDelayLine
from ..codec.frames import ADDRESSED_BITS, CMD_ERROR_RESET, FrameKind, TtcFrame
from ..codec.hamming import DecodeStatus
from ..timebase import (
    PS_PER_US,
    Clock,
    ClockModel,
    TickCounter,
    apply_offset,
    rng_stream,
    signed_tick_diff,
    wrap_ticks,
)
from .engine import Simulation
from .link import FRAME_SYMBOLS, ID_WINDOW_FRAMES, MIN_GAP_FRAMES, SYMBOLS_PER_BIT, Link, Received
from .scenario import Scenario, SlaveConfig

STAGES = (
    "power_up",
    "idle_broadcast",
    "cdr_lock",
    "channel_identification",
    "error_reset",
    "serial_link_calibration",
    "error_free_check",
    "enable_ptp",
    "periodic_correction",
)

PROCESSING_TICKS = 4  # reaction time of a node after a frame is decoded
ID_RETRY_PS = 10 * PS_PER_US
RESIDUAL_SAMPLES = 10
PULSE_LEAD_TICKS = 1000
_SEARCH_TICKS = 256  # how far apart master and slave edges for one tick may be


@dataclasses.dataclass
class Failure:
    stage: str
    slave: int
    reason: str

    def to_dict(self) -> dict:
        return {"stage": self.stage, "slave": self.slave, "reason": self.reason}


class MasterNode:
    def __init__(self, scenario: Scenario) -> None:
        self.clock = Clock(scenario.global_clock, scenario.seed, "master:clock")
        self.counter = TickCounter(0)
        self.state: ptp.MasterState | None = None
        self.tracked_tap: dict[int, int] = {}
        self.scan_requests: dict[int, int] = {}
        self.cycle = 0

    def tick_at_edge(self, k: int) -> int:
        return wrap_ticks(self.counter.raw_at_edge(self.clock, k))


class SlaveNode:
    def __init__(self, cfg: SlaveConfig, scenario: Scenario, start_ps: int) -> None:
        g = scenario.global_clock
        per = g.nominal_period_ps
        # the recovered clock keeps the global frequency and samples mid-symbol
        phase = (g.phase_ps + cfg.channel.delay_ms_ps + cfg.cdr_latency_ps + per // 2) % per
        self.cfg = cfg
        self.id = cfg.id
        self.start_ps = start_ps
        self.clock = Clock(
            ClockModel(per, phase, cfg.clock_jitter_sigma_ps), scenario.seed, f"slave:{cfg.id}:clock"
        )
        self.counter = TickCounter(start_ps)
        self.tap = TapDelayLine(0)
        self.state: ptp.SlaveState | None = None
        self.powered = False
        self.down_errors = 0
        self.scan_bursts = 0
        self.scan: EyeScanResult | None = None
        self.calibrated = False
        self.sync_cycle: int | None = None
        self.first_sync_ps: int | None = None
        self.down: Link
        self.up: Link

    def tick_at_edge(self, k: int) -> int:
        return wrap_ticks(self.counter.raw_at_edge(self.clock, k))


def worst_exchange_ticks(scenario: Scenario) -> int:
    """Upper bound on one sync/delay_req/delay_resp exchange, in ticks."""
    per = scenario.period_ps
    sync_sym = SYMBOLS_PER_BIT * ADDRESSED_BITS * 7 + FRAME_SYMBOLS
    req_sym = SYMBOLS_PER_BIT * ADDRESSED_BITS
    resp_sym = SYMBOLS_PER_BIT * ADDRESSED_BITS * ptp.TIMESTAMP_BYTES
    wait = (MIN_GAP_FRAMES + ID_WINDOW_FRAMES + 1) * FRAME_SYMBOLS + PROCESSING_TICKS
    d_ms = max(s.channel.delay_ms_ps + s.cdr_latency_ps for s in scenario.slaves)
    d_sm = max(s.channel.delay_sm_ps for s in scenario.slaves) + MAX_TAP * TAP_PS
    flight = math.ceil((2 * d_ms + d_sm) / per) + 3 * 8  # plus coarse delays
    return sync_sym + req_sym + resp_sym + 3 * wait + flight


class Network:
    """The simulation handle: one master, its slaves and their links."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.sim = Simulation()
        self.period = scenario.period_ps
        self.master = MasterNode(scenario)
        self.failures: list[Failure] = []
        self.stage_times: dict[str, int] = {}
        self.watchdog_ticks = scenario.sync.watchdog_timeout_ticks or 2 * worst_exchange_ticks(scenario)
        self._expect: dict[int, tuple[list[TtcFrame], object]] = {}
        self.end_ps: int | None = None
        self.brought_up = False
        self._sync_slot: int | None = None
        self._stop_after: str | None = None
        self.slaves: dict[int, SlaveNode] = {}
        for cfg in scenario.slaves:
            self._add_slave(cfg)

    # ------------------------------------------------------------ building

    def _add_slave(self, cfg: SlaveConfig) -> None:
        sc = self.scenario
        rng = rng_stream(sc.seed, f"slave:{cfg.id}", "power_up")
        start = int(rng.integers(0, cfg.power_up_delay_ps + 1))
        s = SlaveNode(cfg, sc, start)
        m = self.master
        # the CDR samples mid-symbol: the scanned eye lives on the upstream side
        down_chan = dataclasses.replace(cfg.channel, eye_closure_ps=0)
        s.down = Link(
            f"{cfg.id}:ms",
            Direction.MS,
            m.clock,
            s.clock,
            down_chan,
            rng_stream(sc.seed, f"slave:{cfg.id}", "link:ms"),
            line_start_edge=m.clock.first_edge_at_or_after(0),
            fixed_extra_ps=cfg.cdr_latency_ps,
        )
        s.up = Link(
            f"{cfg.id}:sm",
            Direction.SM,
            s.clock,
            m.clock,
            cfg.channel,
            rng_stream(sc.seed, f"slave:{cfg.id}", "link:sm"),
            line_start_edge=s.clock.first_edge_at_or_after(start),
            tap=s.tap,
        )
        s.state = ptp.SlaveState(cfg.id, self.watchdog_ticks)
        m.tracked_tap[cfg.id] = 0
        m.scan_requests[cfg.id] = 0
        self.slaves[cfg.id] = s

    def _fail(self, stage: str, slave: int, reason: str) -> None:
        self.failures.append(Failure(stage, slave, reason))

    def failed_slaves(self) -> set[int]:
        return {f.slave for f in self.failures}

    # ---------------------------------------------------------- transport

    def _prepare(self, link: Link, t: int) -> int:
        if link.delta is None:
            link.identify(t)
        return link.plan(t)

    def _send_down(self, s: SlaveNode, frames: list[TtcFrame], message: str | None = None,
                   start_edge: int | None = None) -> int:
        """Transmit to ``s``; returns the slave-clock time the last frame is in."""
        t = self.sim.now
        k = self._prepare(s.down, t) if start_edge is None else start_edge
        burst = s.down.send(k, frames, message)
        last = s.clock.edge_time(k + s.down.nominal_delta(k) + burst.n_symbols)
        for r in burst.received:
            self.sim.schedule(max(t, s.clock.edge_time(r.done_edge)), self._slave_rx, s, r)
        return max(t, last)

    def _send_up(self, s: SlaveNode, frames: list[TtcFrame], message: str | None = None):
        t = self.sim.now + PROCESSING_TICKS * self.period
        k = self._prepare(s.up, t)
        burst = s.up.send(k, frames, message)
        return k, burst

    def _burst_end_at_master(self, s: SlaveNode, burst) -> int:
        k_end = burst.end_edge
        return s.up.tx.edge_time(k_end) + s.up.total_delay_ps + self.period * (1 + s.up.coarse_ticks)

    # --------------------------------------------------------------- slave

    def _slave_rx(self, s: SlaveNode, r: Received) -> None:
        if r.status is not DecodeStatus.OK:
            s.down_errors += 1
        f = r.frame
        if f is None:
            return
        if f.kind is FrameKind.BROADCAST:
            if f.command == CMD_ERROR_RESET:
                s.down_errors = 0
                return
        elif f.receiver_id == s.id and f.subaddress in (SUB_TAP_INC, SUB_TAP_DEC, SUB_SCAN_BURST):
            self._slave_calibration_cmd(s, f)
            return
        tick = s.tick_at_edge(r.reg_edge)
        self._slave_event(s, ptp.RxFrame(f, r.status, tick))

    def _slave_event(self, s: SlaveNode, event) -> None:
        s.state, actions = ptp.slave_step(s.state, event)
        for a in actions:
            if isinstance(a, ptp.SendFrames):
                k, burst = self._send_up(s, list(a.frames), a.message)
                t_tx = s.clock.edge_time(burst.tx_start_bit_edge(0))
                tick = s.tick_at_edge(burst.tx_start_bit_edge(0))
                self.sim.schedule(max(self.sim.now, t_tx), self._slave_event, s, ptp.TxDone(tick))
                for r in burst.received:
                    self.sim.schedule(
                        self.master.clock.edge_time(r.done_edge), self._master_rx, s.id, r
                    )
            elif isinstance(a, ptp.ArmWatchdog):
                self._arm(s.clock, s.tick_at_edge, a.deadline, self._slave_watchdog, s)
            elif isinstance(a, ptp.ApplyOffset):
                k = s.clock.first_edge_at_or_after(self.sim.now + 1)
                at = s.clock.edge_time(k)
                apply_offset(s.counter, a.offset, at)
                if s.sync_cycle is None:
                    s.sync_cycle = self.master.cycle
                    s.first_sync_ps = at

    def _arm(self, clock, tick_at_edge, deadline: int, callback, *args) -> None:
        """Schedule ``callback(deadline, *args)`` for the edge carrying ``deadline``."""
        k = clock.last_edge_at_or_before(self.sim.now)
        ahead = max(0, signed_tick_diff(deadline, tick_at_edge(k)))
        t = max(self.sim.now + 1, clock.edge_time(k + ahead))
        self.sim.schedule(t, callback, deadline, *args)

    def _slave_watchdog(self, deadline: int, s: SlaveNode) -> None:
        if s.state.watchdog_deadline != deadline:
            return  # exchange already finished or restarted
        k = s.clock.last_edge_at_or_before(self.sim.now)
        self._slave_event(s, ptp.Watchdog(s.tick_at_edge(k)))
        if s.state.watchdog_deadline == deadline:
            self._arm(s.clock, s.tick_at_edge, deadline, self._slave_watchdog, s)

    def _slave_calibration_cmd(self, s: SlaveNode, f: TtcFrame) -> None:
        if f.subaddress == SUB_TAP_INC:
            s.tap.increment()
        elif f.subaddress == SUB_TAP_DEC:
            s.tap.decrement()
        else:
            idx = s.scan_bursts
            s.scan_bursts += 1
            frames = scan_frames(s.id, idx, f.data)
            _, burst = self._send_up(s, frames)
            self.sim.schedule(self._burst_end_at_master(s, burst), self._master_scan_done, s.id, burst)

    # -------------------------------------------------------------- master

    def _master_event(self, event) -> None:
        m = self.master
        m.state, actions = ptp.master_step(m.state, event)
        for a in actions:
            if isinstance(a, ptp.SendFrames):
                slot, self._sync_slot = self._sync_slot, None
                self._send_down(self.slaves[a.slave_id], list(a.frames), a.message, start_edge=slot)
            elif isinstance(a, ptp.ArmWatchdog):
                self._arm(m.clock, m.tick_at_edge, a.deadline, self._master_watchdog)

    def _master_rx(self, slave_id: int, r: Received) -> None:
        m = self.master
        if r.frame is not None and r.frame.subaddress == SUB_TEST_FRAME:
            return
        if m.state is None:
            return
        tick = m.tick_at_edge(r.reg_edge)
        self.sim.schedule(
            self.sim.now + PROCESSING_TICKS * self.period,
            self._master_event,
            ptp.RxFrame(r.frame, r.status, tick, link=slave_id),
        )

    def _master_watchdog(self, deadline: int) -> None:
        m = self.master
        if m.state.watchdog_deadline != deadline:
            return
        k = m.clock.last_edge_at_or_before(self.sim.now)
        self._master_event(ptp.Watchdog(m.tick_at_edge(k)))
        if m.state.watchdog_deadline == deadline:
            self._arm(m.clock, m.tick_at_edge, deadline, self._master_watchdog)

    def _master_timer(self, remaining: int) -> None:
        m = self.master
        if m.state.fsm is ptp.MasterFsm.IDLE:
            s = self.slaves[m.state.schedule.current]
            m.cycle = m.state.exchanges_started // len(m.state.schedule.slaves)
            k = self._prepare(s.down, self.sim.now)
            marker_edge = k + SYMBOLS_PER_BIT * ADDRESSED_BITS + 2
            self._sync_slot = k
            self._master_event(ptp.Timer(m.tick_at_edge(marker_edge)))
        if remaining > 1:
            self.sim.schedule(
                self.sim.now + self.scenario.sync.sync_period_ps, self._master_timer, remaining - 1
            )

    # ---------------------------------------------------------- calibration

    def tracked_tap(self, slave_id: int) -> int:
        return self.master.tracked_tap[slave_id]

    def _track(self, slave_id: int, cmds: list[int]) -> None:
        tap = self.master.tracked_tap[slave_id]
        for c in cmds:
            tap = min(tap + 1, MAX_TAP) if c == SUB_TAP_INC else max(tap - 1, 0)
        self.master.tracked_tap[slave_id] = tap

    def scan_step(self, slave_id: int, cmds: list[int], frames: int):
        """Send tap commands and a burst request; future of the error count."""
        s = self.slaves[slave_id]
        m = self.master
        idx = m.scan_requests[slave_id]
        m.scan_requests[slave_id] = idx + 1
        fut = self.sim.future()
        self._expect[slave_id] = (scan_frames(slave_id, idx, frames), fut)
        self._track(slave_id, cmds)
        out = [TtcFrame.addressed(slave_id, c, 0) for c in cmds]
        out.append(TtcFrame.addressed(slave_id, SUB_SCAN_BURST, frames))
        t_cmd = self._send_down(s, out)
        burst_ps = (frames * ADDRESSED_BITS * SYMBOLS_PER_BIT + 2 * ID_WINDOW_FRAMES * FRAME_SYMBOLS)
        limit = t_cmd - self.sim.now + 2 * burst_ps * self.period + 2 * s.up.total_delay_ps
        return self.sim.with_timeout(fut, limit + PS_PER_US)

    def _master_scan_done(self, slave_id: int, burst) -> None:
        exp = self._expect.pop(slave_id, None)
        if exp is None:
            return
        expected, fut = exp
        errors = count_frame_errors([(r.frame, r.status) for r in burst.received], expected)
        fut.set(errors)

    def _walk_tap(self, s: SlaveNode, target: int):
        cmds = tap_commands(self.master.tracked_tap[s.id], target)
        self._track(s.id, cmds)
        if not cmds:
            return self.sim.timeout(0)
        t = self._send_down(s, [TtcFrame.addressed(s.id, c, 0) for c in cmds])
        return self.sim.at(t + PROCESSING_TICKS * self.period)

    def _calibrate(self, s: SlaveNode) -> Generator:
        sc = self.scenario
        fpt = sc.eyescan.frames_per_tap
        for _attempt in range(sc.retries + 1):
            try:
                scan = yield from eye_scan_process(self, s.id, fpt)
            except ScanAborted as exc:
                self._fail("serial_link_calibration", s.id, str(exc))
                return False
            s.scan = scan
            if not scan.open:
                self._fail("serial_link_calibration", s.id, "no open window")
                return False
            yield self._walk_tap(s, scan.best_tap)
            s.up.delta = None  # the master re-locks onto the moved upstream eye
            c_s, c_m = balance_coarse(scan.best_tap * TAP_PS, s.cfg.measured_latency_ps, self.period)
            s.down.coarse_ticks = c_s.ticks
            s.up.coarse_ticks = c_m.ticks
            errors = yield self.scan_step(s.id, [], fpt)
            if errors == 0 and s.down_errors == 0:
                s.calibrated = True
                return True
        self._fail("error_free_check", s.id, "confirmation burst not error free")
        return False

    def rescan(self, slave_id: int, frames_per_tap: int | None = None) -> EyeScanResult:
        """Manual re-scan on a brought-up network; restores the previous tap."""
        s = self.slaves[slave_id]
        fpt = frames_per_tap or self.scenario.eyescan.frames_per_tap
        prev = s.tap.tap

        def proc():
            scan = yield from eye_scan_process(self, slave_id, fpt)
            yield self._walk_tap(s, prev)
            s.up.delta = None
            return scan

        fut = self.sim.process(proc())
        self.sim.run()
        self.end_ps = self.sim.now
        return fut.value

    # -------------------------------------------------------------- bring-up

    def _power_up(self, s: SlaveNode) -> Generator:
        yield self.sim.at(s.start_ps)
        s.powered = True
        for _attempt in range(self.scenario.retries + 1):
            if s.down.identify(self.sim.now):
                break
            yield self.sim.timeout(ID_RETRY_PS)
        else:
            self._fail("channel_identification", s.id, "downstream frame alignment not found")
            return False
        s.state, _ = ptp.slave_step(s.state, ptp.Aligned())
        s.up.identify(self.sim.now)
        return True

    def _bringup(self) -> Generator:
        sim = self.sim
        sc = self.scenario
        self.stage_times["power_up"] = 0
        self.stage_times["idle_broadcast"] = 0
        procs = [sim.process(self._power_up(s)) for s in self.slaves.values()]
        self.stage_times["cdr_lock"] = max(s.start_ps for s in self.slaves.values())
        aligned = yield sim.all_of(procs)
        live = [s for s, ok in zip(self.slaves.values(), aligned) if ok]
        self.stage_times["channel_identification"] = sim.now

        last = sim.now
        for s in live:
            last = max(last, self._send_down(s, [TtcFrame.broadcast(CMD_ERROR_RESET)]))
        yield sim.at(last + PROCESSING_TICKS * self.period)
        self.stage_times["error_reset"] = sim.now

        calibrated = []
        for s in live:
            ok = yield sim.process(self._calibrate(s))
            if ok:
                calibrated.append(s)
        self.stage_times["serial_link_calibration"] = sim.now
        self.stage_times["error_free_check"] = sim.now
        if self._stop_after == "error_free_check":
            return True

        if calibrated:
            for s in calibrated:
                s.state, _ = ptp.slave_step(s.state, ptp.EnablePtp())
            self.master.state = ptp.MasterState(
                ptp.Schedule(tuple(s.id for s in calibrated)), self.watchdog_ticks
            )
        self.stage_times["enable_ptp"] = sim.now

        period = sc.sync.sync_period_ps
        if sc.run_length_ps is not None:
            n_timers = max(0, (sc.run_length_ps - sim.now) // period)
            end = max(sim.now, sc.run_length_ps)
        else:
            n_timers = sc.sync.cycles * max(1, len(calibrated))
            end = sim.now + n_timers * period
        if calibrated and n_timers:
            sim.schedule(sim.now, self._master_timer, n_timers)
        yield sim.at(end)
        self.stage_times["periodic_correction"] = sim.now
        for s in calibrated:
            if s.sync_cycle is None:
                self._fail("periodic_correction", s.id, "never synchronized")
        return True

    def run_bringup(self, stop_after: str | None = None):
        """Execute the bring-up; ``stop_after="error_free_check"`` ends the
        run once calibration is done (no PTP)."""
        from .report import build_report

        if self.brought_up:
            raise RuntimeError("bring-up already executed")
        if stop_after not in (None, "error_free_check", "periodic_correction"):
            raise ValueError(f"cannot stop after stage {stop_after!r}")
        self._stop_after = stop_after
        self.sim.process(self._bringup())
        self.sim.run()
        self.end_ps = self.sim.now
        self.brought_up = True
        return build_report(self)

    # -------------------------------------------------------- measurements

    def synchronized(self, slave_id: int) -> bool:
        s = self.slaves[slave_id]
        return s.first_sync_ps is not None

    def residual_samples(self, slave_id: int, n: int = RESIDUAL_SAMPLES) -> list[dict]:
        """Slave-minus-master edge time for equal tick values, sampled after sync."""
        s = self.slaves[slave_id]
        if s.first_sync_ps is None:
            return []
        m = self.master
        t0 = s.first_sync_ps + self.period
        t1 = max(t0, self.end_ps)
        out = []
        for t in np.linspace(t0, t1, n):
            k_m = m.clock.first_edge_at_or_after(int(t))
            t_m = m.clock.edge_time(k_m)
            value = m.counter.raw_at(m.clock, t_m)
            k_s = s.counter.edge_for_tick(s.clock, value, after=t_m - _SEARCH_TICKS * self.period)
            t_s = s.clock.edge_time(k_s)
            residual = t_s - t_m
            skew = value - s.counter.raw_at(s.clock, t_m)
            out.append(
                {
                    "t_ps": t_m,
                    "residual_ps": residual,
                    "tick_error": int(residual / self.period),
                    "count_skew": skew,
                }
            )
        return out


def build_scenario(config: Scenario) -> Network:
    return Network(config)


def run_bringup(net: Network, stop_after: str | None = None):
    return net.run_bringup(stop_after)


def pulse_alignment(net: Network, scheduled_tick: int | None = None) -> dict:
    """Absolute emission time of each node's pulse at ``scheduled_tick``."""
    if not net.brought_up:
        raise RuntimeError("bring-up has not been run")
    m = net.master
    now = net.end_ps
    current = m.counter.raw_at(m.clock, now)
    if scheduled_tick is None:
        scheduled_tick = current + PULSE_LEAD_TICKS
    if scheduled_tick <= current:
        raise ValueError(f"scheduled tick {scheduled_tick} is in the past (now {current})")
    out = {"scheduled_tick": scheduled_tick, "master": m.clock.edge_time(m.counter.edge_for_tick(m.clock, scheduled_tick))}
    slaves = {}
    for sid, s in net.slaves.items():
        if s.first_sync_ps is None:
            slaves[sid] = None
            continue
        k = s.counter.edge_for_tick(s.clock, scheduled_tick, after=now)
        slaves[sid] = s.clock.edge_time(k)
    out["slaves"] = slaves
    return out
