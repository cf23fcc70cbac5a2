"""Run report: what an external observer with perfect clocks would record."""

from __future__ import annotations

import json

from ..timebase import PS_PER_NS

SCHEMA = "ttcsim.run_report/1"
ACCURACY_BAND_PS = 16 * PS_PER_NS  # system timing requirement


def _slave_entry(net, s) -> dict:
    st = s.state
    samples = net.residual_samples(s.id)
    residuals = [x["residual_ps"] for x in samples]
    scan = s.scan
    entry = {
        "id": s.id,
        "power_up_ps": s.start_ps,
        "aligned": bool(st.aligned_flag),
        "calibrated": s.calibrated,
        "synchronized": s.first_sync_ps is not None,
        "sync_cycle": s.sync_cycle,
        "first_sync_ps": s.first_sync_ps,
        "offset_applied": st.history[0] if st.history else None,
        "offsets": list(st.history),
        "corrections": st.correction_count,
        "exchanges": st.exchanges,
        "anomalies": st.anomalies,
        "downstream_errors": s.down_errors,
        "tap": s.tap.tap,
        "coarse": {"slave_downstream": s.down.coarse_ticks, "master_upstream": s.up.coarse_ticks},
        "eyescan": None
        if scan is None
        else {
            "window": list(scan.window) if scan.window else None,
            "width": scan.width,
            "best_tap": scan.best_tap,
            "frames_per_tap": scan.frames_per_tap,
        },
        "residual": None,
        "max_tick_error": None,
        "count_skew_range": None,
    }
    if samples:
        entry["residual"] = {
            "mean_ps": round(sum(residuals) / len(residuals), 3),
            "max_abs_ps": max(abs(r) for r in residuals),
            "samples": samples,
        }
        entry["max_tick_error"] = max((x["tick_error"] for x in samples), key=abs)
        skews = [x["count_skew"] for x in samples]
        entry["count_skew_range"] = [min(skews), max(skews)]
    return entry


def build_report(net) -> dict:
    from .network import STAGES

    m = net.master
    ms = m.state
    slaves = [_slave_entry(net, s) for s in net.slaves.values()]
    failures = [f.to_dict() for f in net.failures]
    for e in slaves:
        res = e["residual"]
        if res is not None and res["max_abs_ps"] > ACCURACY_BAND_PS:
            failures.append(
                {
                    "stage": "periodic_correction",
                    "slave": e["id"],
                    "reason": f"residual {res['max_abs_ps']} ps outside the ±{ACCURACY_BAND_PS} ps band",
                }
            )
    ok = not failures and all(e["synchronized"] for e in slaves)
    return {
        "schema": SCHEMA,
        "seed": net.scenario.seed,
        "ok": ok,
        "failures": failures,
        "stages": [{"name": n, "t_ps": net.stage_times.get(n)} for n in STAGES],
        "master": {
            "exchanges_started": ms.exchanges_started if ms else 0,
            "exchanges_completed": ms.exchanges_completed if ms else 0,
            "watchdog_expiries": ms.watchdog_expiries if ms else 0,
            "anomalies": ms.anomalies if ms else 0,
        },
        "slaves": slaves,
        "watchdog_timeout_ticks": net.watchdog_ticks,
        "end_ps": net.end_ps,
        "events_executed": net.sim.events_executed,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
