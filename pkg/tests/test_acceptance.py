"""End-to-end acceptance checks, one test per criterion.

Each test appends a ``criterion N: PASS|FAIL ...`` line to the acceptance
summary printed at the end of the pytest run.  Every scenario simulated here
is remembered so the determinism check can run it a second time and compare
report bytes.
"""

from __future__ import annotations

import contextlib
import itertools
import math
from importlib import resources

import numpy as np
import pytest

from oracles import floor_offset
from ttcsim import ptp
from ttcsim.calibration import expected_window_taps
from ttcsim.channel import ChannelModel
from ttcsim.codec.bmc import bmc_decode, bmc_encode, max_transition_gap
from ttcsim.codec.frames import tdm_deinterleave, tdm_interleave
from ttcsim.codec.hamming import DecodeStatus, decode_int, encode_int
from ttcsim.sim.campaigns import with_asymmetry
from ttcsim.sim.network import Network, pulse_alignment
from ttcsim.sim.report import report_json
from ttcsim.sim.scenario import (
    EyeScanConfig,
    Scenario,
    SlaveConfig,
    SyncConfig,
    cable_channel,
    drop_scenario,
    ideal_scenario,
)
from ttcsim.timebase import ClockModel

PERIOD = 4000
CONFIGS = resources.files("ttcsim") / "configs"

# scenario JSON -> report bytes of its first run
_FIRST_RUN: dict[str, str] = {}


def simulate(sc: Scenario, pulses: bool = False) -> tuple[Network, dict]:
    net = Network(sc)
    report = net.run_bringup()
    if pulses:
        p = pulse_alignment(net)
        report["pulses"] = {"master_ps": p["master"], "slaves": {str(k): v for k, v in p["slaves"].items()}}
    _FIRST_RUN.setdefault(_key(sc, pulses), report_json(report))
    return net, report


def _key(sc: Scenario, pulses: bool) -> str:
    return ("P" if pulses else "R") + sc.to_json()


@contextlib.contextmanager
def criterion(log, n: int, title: str):
    detail: list[str] = []
    try:
        yield detail
    except BaseException:
        log.append(f"criterion {n}: FAIL  {title}" + (f" ({'; '.join(detail)})" if detail else ""))
        print(log[-1])
        raise
    log.append(f"criterion {n}: PASS  {title}" + (f" ({'; '.join(detail)})" if detail else ""))
    print(log[-1])


def combined_sigma(clock_sigma: float, channel_sigma: float) -> float:
    # transmit and receive clock edges each carry sigma/sqrt(2)
    return math.sqrt(clock_sigma**2 + channel_sigma**2)


# ------------------------------------------------------------ scenarios


def random_scenarios(n: int = 1000, seed: int = 20240601) -> list[Scenario]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        d = int(rng.integers(0, 500_001))
        slave = SlaveConfig(
            1,
            ChannelModel(delay_ms_ps=d, delay_sm_ps=d),
            power_up_delay_ps=10**6 * PERIOD,
            clock_jitter_sigma_ps=3.4,
        )
        out.append(
            Scenario(
                slaves=(slave,),
                seed=int(rng.integers(0, 2**63)),
                global_clock=ClockModel(PERIOD, int(rng.integers(0, PERIOD)), 3.4),
                eyescan=EyeScanConfig(1),
                sync=SyncConfig(cycles=2),
            )
        )
    return out


SWEEP_VALUES = list(range(0, 50_001, 2_000)) + [7_999]


def sweep_template() -> Scenario:
    return ideal_scenario(1).replace(
        slaves=(SlaveConfig(1, cable_channel(50.0)),),
        eyescan=EyeScanConfig(20),
        sync=SyncConfig(cycles=5),
    )


def sweep_scenarios() -> list[Scenario]:
    return [with_asymmetry(sweep_template(), a) for a in SWEEP_VALUES]


def preset_scenarios() -> dict[str, Scenario]:
    return {
        name: Scenario.from_json((CONFIGS / f"{name}.json").read_text())
        for name in ("fig12", "fig13")
    }


EYE_SIGMAS = (0.0, 3.4, 10.0)
CLOSURES = (0, 800, 1600, 2400, 3200)


def eye_scenario(closure: int, sigma: float) -> Scenario:
    ch = cable_channel(3.0, eye_closure_ps=closure, edge_jitter_sigma_ps=sigma)
    return ideal_scenario(1).replace(slaves=(SlaveConfig(1, ch),), sync=SyncConfig(cycles=1))


def eye_scenarios() -> list[Scenario]:
    return [eye_scenario(0, s) for s in EYE_SIGMAS] + [eye_scenario(c, 3.4) for c in CLOSURES]


def drop_scenarios() -> list[tuple[str, int, Scenario]]:
    base = ideal_scenario(3).replace(eyescan=EyeScanConfig(20), sync=SyncConfig(cycles=4))
    return [
        (msg, sid, drop_scenario(msg, sid, base))
        for msg, sid in itertools.product(("sync", "delay_req", "delay_resp"), (1, 2, 3))
    ]


# ------------------------------------------------------------- criteria


def test_criterion_1_one_period_bound(acceptance_log):
    with criterion(acceptance_log, 1, "±1-period bound over 1000 random scenarios") as d:
        errors, worst, count = set(), 0, 0
        for sc in random_scenarios():
            _, report = simulate(sc)
            e = report["slaves"][0]
            assert e["synchronized"], report["failures"]
            errors.add(e["max_tick_error"])
            errors.update(x["tick_error"] for x in e["residual"]["samples"])
            worst = max(worst, e["residual"]["max_abs_ps"])
            count += 1
        d.append(f"{count} scenarios, tick errors {sorted(errors)}, worst |residual| {worst} ps")
        assert count == 1000
        assert errors <= {-1, 0, 1}
        assert worst <= PERIOD


def test_criterion_2_offset_rounding(acceptance_log):
    with criterion(acceptance_log, 2, "offset rounding: 47 -> 23, floor oracle over 10^6 tuples") as d:
        assert ptp.compute_offset(100, 80, 376, 403) == 23
        assert ptp.compute_offset(0, 0, 0, -47) == -24  # halving rounds toward -inf
        rng = np.random.default_rng(2)
        t = rng.integers(0, 1 << 40, size=(10**6, 4))
        # spread the sums over both signs
        t[:, 1] += rng.integers(-(1 << 20), 1 << 20, 10**6)
        mismatches = 0
        negative = 0
        for t1, t2, t3, t4 in t.tolist():
            want = floor_offset(t1, t2, t3, t4)
            negative += (t1 - t2) + (t4 - t3) < 0
            if ptp.compute_offset(t1, t2, t3, t4) != want:
                mismatches += 1
        d.append(f"{mismatches} mismatches, {negative} negative sums")
        assert mismatches == 0 and negative > 10**5


def test_criterion_3_half_asymmetry_law(acceptance_log):
    with criterion(acceptance_log, 3, "residual = A/2 ± 4 ns for A in 0..50 ns") as d:
        worst_dev = 0.0
        for a, sc in zip(SWEEP_VALUES, sweep_scenarios()):
            _, report = simulate(sc)
            e = report["slaves"][0]
            assert e["synchronized"], (a, report["failures"])
            mean = e["residual"]["mean_ps"]
            dev = mean - a / 2
            worst_dev = max(worst_dev, abs(dev))
            assert abs(dev) <= 4000, (a, mean)
            if a == 50_000:
                d.append(f"A=50 ns -> {mean / 1000:.3f} ns")
                assert abs(mean - 25_000) <= 4000
        d.append(f"worst |residual - A/2| {worst_dev:.0f} ps")


def test_criterion_4_small_asymmetry_keeps_tick_bound(acceptance_log):
    with criterion(acceptance_log, 4, "tick error within ±1 for A < 8 ns") as d:
        checked = []
        for a, sc in zip(SWEEP_VALUES, sweep_scenarios()):
            if a >= 8000:
                continue
            _, report = simulate(sc)
            e = report["slaves"][0]
            ticks = {x["tick_error"] for x in e["residual"]["samples"]}
            checked.append(a)
            assert ticks <= {-1, 0, 1}, (a, ticks)
        d.append(f"A values {checked}")
        assert 7_999 in checked


def test_criterion_5_pulse_offsets(acceptance_log):
    with criterion(acceptance_log, 5, "pulse offsets of the 3/80/50 m and equal-cable setups") as d:
        figs = preset_scenarios()
        _, r13 = simulate(figs["fig13"], pulses=True)
        p = r13["pulses"]
        off = {int(k): v - p["master_ps"] for k, v in p["slaves"].items()}
        d.append("3/80/50 m offsets " + ", ".join(f"{k}: {v / 1000:.3f} ns" for k, v in sorted(off.items())))
        assert 4000 < off[2] <= 9000
        assert abs(off[1]) <= 4000 and abs(off[3]) <= 4000

        _, r12 = simulate(figs["fig12"], pulses=True)
        p = r12["pulses"]
        times = [p["master_ps"]] + list(p["slaves"].values())
        spread = max(times) - min(times)
        d.append(f"equal cables spread {spread} ps")
        assert spread < 1000


def test_criterion_6_eye_width(acceptance_log):
    with criterion(acceptance_log, 6, "eye window 51 ± 3 taps; closure sweep within ±2 taps") as d:
        widths = {}
        for sigma in EYE_SIGMAS:
            net, _ = simulate(eye_scenario(0, sigma))
            widths[sigma] = net.slaves[1].scan.width
        d.append("widths " + ", ".join(f"σ={s:g}: {w}" for s, w in widths.items()))
        assert all(abs(w - 51) <= 3 for w in widths.values())
        devs = []
        for closure in CLOSURES:
            sc = eye_scenario(closure, 3.4)
            net, _ = simulate(sc)
            want = expected_window_taps(PERIOD, closure, combined_sigma(3.4, 3.4))
            devs.append(net.slaves[1].scan.width - want)
        d.append("closure deviations " + ", ".join(f"{x:+.2f}" for x in devs))
        assert all(abs(x) <= 2 for x in devs)


def test_criterion_7_codec_exhaustives(acceptance_log):
    with criterion(acceptance_log, 7, "codec exhaustives") as d:
        bad = 0
        for p in range(256):
            cw = encode_int(p, 8)
            bad += decode_int(cw, 13) != (p, DecodeStatus.OK)
            for i in range(13):
                bad += decode_int(cw ^ (1 << i), 13) != (p, DecodeStatus.CORRECTED_SINGLE)
            for i, j in itertools.combinations(range(13), 2):
                bad += decode_int(cw ^ (1 << i) ^ (1 << j), 13)[1] is not DecodeStatus.UNCORRECTABLE
        d.append(f"(13,8): {bad} failures")
        assert bad == 0

        rng = np.random.default_rng(7)
        bad38 = 0
        payloads = rng.integers(0, 1 << 31, 10**5).tolist()
        flips = rng.integers(0, 38, (10**5, 2)).tolist()
        for k, (p, (i, j)) in enumerate(zip(payloads, flips)):
            cw = encode_int(p, 31)
            if k % 2 == 0 or i == j:
                bad38 += decode_int(cw ^ (1 << i), 38) != (p, DecodeStatus.CORRECTED_SINGLE)
            else:
                bad38 += decode_int(cw ^ (1 << i) ^ (1 << j), 38)[1] is not DecodeStatus.UNCORRECTABLE
        d.append(f"(38,31): {bad38} failures in 10^5")
        assert bad38 == 0

        bits = rng.integers(0, 2, 10**6).astype(np.uint8)
        stream = bmc_encode(bits, 0, PERIOD)
        bmc_bad = int(np.count_nonzero(bmc_decode(stream, ClockModel(PERIOD // 2, PERIOD // 4)) != bits))
        gap = max_transition_gap(stream)
        a, b = bits[::2], bits[1::2]
        ra, rb = tdm_deinterleave(tdm_interleave(a, b))
        tdm_bad = int(np.count_nonzero(ra != a) + np.count_nonzero(rb != b))
        d.append(f"BMC {bmc_bad}, TDM {tdm_bad} mismatches in 10^6 bits; max gap {gap} ps")
        assert bmc_bad == 0 and tdm_bad == 0 and gap <= PERIOD


def test_criterion_8_watchdog_liveness(acceptance_log):
    with criterion(acceptance_log, 8, "one dropped message per run, all synchronized by cycle 3") as d:
        latest = 0
        for msg, sid, sc in drop_scenarios():
            _, report = simulate(sc)
            m = report["master"]
            assert m["exchanges_started"] == 4 * 3, (msg, sid, m)  # never stuck
            assert m["exchanges_completed"] >= 4 * 3 - 1
            assert report["events_executed"] < 10**6
            for e in report["slaves"]:
                assert e["synchronized"] and e["sync_cycle"] <= 2, (msg, sid, e["id"], e["sync_cycle"])
                latest = max(latest, e["sync_cycle"] + 1)
        d.append(f"9 runs, latest sync in cycle {latest}")


def test_criterion_9_determinism(acceptance_log):
    with criterion(acceptance_log, 9, "byte-identical reports on rerun") as d:
        jobs = [(sc, False) for sc in random_scenarios()]
        jobs += [(sc, False) for sc in sweep_scenarios()]
        jobs += [(sc, True) for sc in preset_scenarios().values()]
        jobs += [(sc, False) for sc in eye_scenarios()]
        jobs += [(sc, False) for _, _, sc in drop_scenarios()]
        differ = 0
        for sc, pulses in jobs:
            key = _key(sc, pulses)
            if key not in _FIRST_RUN:
                simulate(sc, pulses)
            first = _FIRST_RUN[key]
            net = Network(sc)
            report = net.run_bringup()
            if pulses:
                p = pulse_alignment(net)
                report["pulses"] = {"master_ps": p["master"], "slaves": {str(k): v for k, v in p["slaves"].items()}}
            differ += report_json(report) != first
        d.append(f"{len(jobs)} scenarios rerun, {differ} differ")
        assert differ == 0


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
