from __future__ import annotations

import pytest

from ttcsim.sim.network import STAGES, Network, build_scenario, pulse_alignment, run_bringup
from ttcsim.sim.report import SCHEMA, report_json
from ttcsim.sim.scenario import (
    EyeScanConfig,
    SlaveConfig,
    SyncConfig,
    cable_channel,
    drop_scenario,
    ideal_scenario,
)
from ttcsim.timebase import PS_PER_MS, ClockModel

PERIOD = 4000


def quick(n=3, cycles=3, fpt=10, **kw):
    return ideal_scenario(n, **kw).replace(eyescan=EyeScanConfig(fpt), sync=SyncConfig(cycles=cycles))


def with_power_up(sc, delay_ps):
    return sc.replace(slaves=tuple(
        SlaveConfig(s.id, s.channel, power_up_delay_ps=delay_ps) for s in sc.slaves
    ))


def stage_time(report, name):
    return next(s["t_ps"] for s in report["stages"] if s["name"] == name)


def test_minimal_single_slave_ideal_channel():
    sc = ideal_scenario(1).replace(
        slaves=(SlaveConfig(1),), eyescan=EyeScanConfig(5), sync=SyncConfig(cycles=2)
    )
    report = run_bringup(build_scenario(sc))
    assert report["ok"] and report["slaves"][0]["synchronized"]


def test_ideal_three_slaves_within_one_period():
    report = Network(quick()).run_bringup()
    assert report["schema"] == SCHEMA and report["ok"]
    for e in report["slaves"]:
        assert e["synchronized"] and e["calibrated"] and e["aligned"]
        assert e["residual"]["max_abs_ps"] <= PERIOD
        assert e["max_tick_error"] in (-1, 0, 1)
    assert [s["name"] for s in report["stages"]] == list(STAGES)
    times = [s["t_ps"] for s in report["stages"]]
    assert times == sorted(times)


def test_random_power_up_is_corrected():
    sc = with_power_up(quick(), 3 * PS_PER_MS)
    report = Network(sc).run_bringup()
    assert report["ok"]
    assert len({e["power_up_ps"] for e in report["slaves"]}) == 3
    for e in report["slaves"]:
        assert abs(e["offset_applied"]) > 1000  # counters started ms apart
        assert e["max_tick_error"] in (-1, 0, 1)


@pytest.mark.parametrize("message", ["sync", "delay_req", "delay_resp"])
def test_dropped_message_recovers_on_a_later_cycle(message):
    report = Network(drop_scenario(message, 1, quick(cycles=4))).run_bringup()
    by_id = {e["id"]: e for e in report["slaves"]}
    assert report["ok"]
    assert by_id[1]["sync_cycle"] >= 1
    assert by_id[2]["sync_cycle"] == 0 and by_id[3]["sync_cycle"] == 0
    m = report["master"]
    assert m["exchanges_started"] == 12
    if message == "delay_resp":
        # the master saw a complete exchange; only the slave timed out
        assert m["watchdog_expiries"] == 0 and m["exchanges_completed"] == 12
        assert by_id[1]["anomalies"] == 1 and by_id[1]["exchanges"] == 3
    else:
        assert m["watchdog_expiries"] == 1


def test_closed_eye_fails_only_that_slave():
    sc = quick()
    sc = sc.with_slave(2, channel=cable_channel(3.0, eye_closure_ps=PERIOD))
    report = Network(sc).run_bringup()
    by_id = {e["id"]: e for e in report["slaves"]}
    assert not report["ok"]
    assert report["failures"][0]["stage"] == "serial_link_calibration"
    assert report["failures"][0]["slave"] == 2
    assert not by_id[2]["synchronized"] and by_id[2]["exchanges"] == 0
    assert by_id[1]["synchronized"] and by_id[3]["synchronized"]


def test_stop_after_calibration_runs_no_ptp():
    net = Network(quick())
    report = net.run_bringup(stop_after="error_free_check")
    assert report["master"]["exchanges_started"] == 0
    assert all(e["calibrated"] and not e["synchronized"] for e in report["slaves"])
    assert all(e["exchanges"] == 0 for e in report["slaves"])


def test_bringup_guards():
    net = Network(quick(1, 1))
    with pytest.raises(RuntimeError):
        pulse_alignment(net)
    with pytest.raises(ValueError):
        net.run_bringup(stop_after="cdr_lock")
    net.run_bringup()
    with pytest.raises(RuntimeError):
        net.run_bringup()


def test_pulse_in_the_past_rejected():
    net = Network(quick(1, 1))
    net.run_bringup()
    with pytest.raises(ValueError, match="past"):
        pulse_alignment(net, 10)
    p = pulse_alignment(net)
    assert p["slaves"][1] > p["master"] - 2 * PERIOD


@pytest.mark.parametrize("length_m,offset", [(2.8, 0), (2.9, 500), (3.0, 1000), (3.1, 1500), (3.2, 2000)])
def test_jitter_free_pulse_offset_is_recovered_clock_phase(length_m, offset):
    """Recovered clock phase is (delay + T/2) mod T; a symmetric link cancels
    the delay in whole ticks and leaves only that sub-tick phase."""
    sc = ideal_scenario(1, global_clock=ClockModel(PERIOD, 0, 0.0)).replace(
        slaves=(SlaveConfig(1, cable_channel(length_m), clock_jitter_sigma_ps=0.0),),
        eyescan=EyeScanConfig(5),
        sync=SyncConfig(cycles=2),
    )
    net = Network(sc)
    net.run_bringup()
    p = pulse_alignment(net)
    d = sc.slaves[0].channel.delay_ms_ps
    assert (d + PERIOD // 2) % PERIOD == offset
    assert p["slaves"][1] - p["master"] == offset


def test_hundred_cycles_stay_in_band():
    sc = ideal_scenario(1).replace(
        slaves=(SlaveConfig(1, cable_channel(50.0), power_up_delay_ps=PS_PER_MS),),
        eyescan=EyeScanConfig(5),
        sync=SyncConfig(cycles=110),
    )
    net = Network(sc)
    report = net.run_bringup()
    e = report["slaves"][0]
    assert e["exchanges"] >= 100
    assert all(abs(o) <= 1 for o in e["offsets"][1:])
    samples = net.residual_samples(1, 220)
    assert {x["tick_error"] for x in samples} <= {-1, 0, 1}
    assert all(abs(x["residual_ps"]) <= PERIOD for x in samples)


def test_48_slaves_one_cycle_within_48_periods():
    sc = ideal_scenario(48).replace(eyescan=EyeScanConfig(1), sync=SyncConfig(cycles=1))
    report = Network(sc).run_bringup()
    assert report["ok"]
    start = stage_time(report, "enable_ptp")
    last = max(e["first_sync_ps"] for e in report["slaves"])
    assert all(e["sync_cycle"] == 0 for e in report["slaves"])
    assert last - start <= 48 * sc.sync.sync_period_ps


def test_reports_are_byte_identical_for_equal_seeds():
    sc = with_power_up(quick(), PS_PER_MS)
    a = report_json(Network(sc).run_bringup())
    b = report_json(Network(sc).run_bringup())
    assert a == b
    c = report_json(Network(sc.replace(seed=1589)).run_bringup())
    assert c != a


def test_watchdog_default_scales_with_scenario():
    short = Network(quick(1, 1))
    long = Network(quick(1, 1).with_slave(1, channel=cable_channel(100.0)))
    assert long.watchdog_ticks > short.watchdog_ticks
    assert Network(quick(1, 1).replace(sync=SyncConfig(watchdog_timeout_ticks=999))).watchdog_ticks == 999
