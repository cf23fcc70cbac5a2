"""Measurement campaigns built from repeated bring-ups."""

from __future__ import annotations

import dataclasses
from collections.abc import Sequence
from dataclasses import dataclass

from .network import Network
from .scenario import Scenario


@dataclass(frozen=True)
class SweepRow:
    asymmetry_ps: int
    mean_residual_ps: float
    max_tick_error: int


def with_asymmetry(template: Scenario, asymmetry_ps: int) -> Scenario:
    """Lengthen every downstream pair by ``asymmetry_ps`` (negative shortens
    the upstream pair instead)."""
    slaves = []
    for s in template.slaves:
        ch = s.channel
        base = min(ch.delay_ms_ps, ch.delay_sm_ps)
        if asymmetry_ps >= 0:
            ch = dataclasses.replace(ch, delay_ms_ps=base + asymmetry_ps, delay_sm_ps=base)
        else:
            ch = dataclasses.replace(ch, delay_ms_ps=base, delay_sm_ps=base - asymmetry_ps)
        slaves.append(dataclasses.replace(s, channel=ch))
    return template.replace(slaves=tuple(slaves))


def asymmetry_sweep(template: Scenario, values: Sequence[int]) -> list[SweepRow]:
    """One bring-up per asymmetry value; residuals pooled over all slaves."""
    rows = []
    for a in values:
        net = Network(with_asymmetry(template, int(a)))
        report = net.run_bringup()
        res, worst = [], 0
        for e in report["slaves"]:
            if e["residual"] is None:
                continue
            res.extend(x["residual_ps"] for x in e["residual"]["samples"])
            if abs(e["max_tick_error"]) > abs(worst):
                worst = e["max_tick_error"]
        mean = round(sum(res) / len(res), 3) if res else float("nan")
        rows.append(SweepRow(int(a), mean, worst))
    return rows
