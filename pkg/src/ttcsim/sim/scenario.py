"""Scenario description and its JSON form.

The JSON document mirrors the dataclasses field for field; all times are
integer picoseconds.  Unknown keys are rejected and every validation error
names the offending field path (``slaves[1].channel.delay_ms_ps``).
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field

from ..calibration import DEFAULT_FRAMES_PER_TAP, MAX_FRAMES_PER_BURST
from ..channel import ChannelModel, DropRule, cable_delay_ps
from ..timebase import PS_PER_MS, ClockModel

DEFAULT_SEED = 1588
DEFAULT_JITTER_PS = 3.4
DEFAULT_SYNC_PERIOD_PS = PS_PER_MS
DEFAULT_SYNC_CYCLES = 100
MAX_RECEIVER_ID = (1 << 14) - 1


class ConfigError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


@dataclass(frozen=True)
class SlaveConfig:
    id: int
    channel: ChannelModel = field(default_factory=ChannelModel)
    cdr_latency_ps: int = 0
    # latency value the compensation logic believes in; None means exact
    cdr_latency_measured_ps: int | None = None
    power_up_delay_ps: int = 0
    clock_jitter_sigma_ps: float = DEFAULT_JITTER_PS

    def __post_init__(self) -> None:
        if not 0 <= self.id <= MAX_RECEIVER_ID:
            raise ConfigError("id", f"must lie in [0, {MAX_RECEIVER_ID}]")
        for name in ("cdr_latency_ps", "power_up_delay_ps"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")
        if self.cdr_latency_measured_ps is not None and self.cdr_latency_measured_ps < 0:
            raise ConfigError("cdr_latency_measured_ps", "must be non-negative")
        if self.clock_jitter_sigma_ps < 0:
            raise ConfigError("clock_jitter_sigma_ps", "must be non-negative")

    @property
    def measured_latency_ps(self) -> int:
        if self.cdr_latency_measured_ps is None:
            return self.cdr_latency_ps
        return self.cdr_latency_measured_ps


@dataclass(frozen=True)
class SyncConfig:
    sync_period_ps: int = DEFAULT_SYNC_PERIOD_PS
    # None: twice the worst-case exchange duration of the scenario
    watchdog_timeout_ticks: int | None = None
    cycles: int = DEFAULT_SYNC_CYCLES

    def __post_init__(self) -> None:
        if self.sync_period_ps <= 0:
            raise ConfigError("sync_period_ps", "must be positive")
        if self.watchdog_timeout_ticks is not None and self.watchdog_timeout_ticks <= 0:
            raise ConfigError("watchdog_timeout_ticks", "must be positive")
        if self.cycles < 1:
            raise ConfigError("cycles", "must be at least 1")


@dataclass(frozen=True)
class EyeScanConfig:
    frames_per_tap: int = DEFAULT_FRAMES_PER_TAP

    def __post_init__(self) -> None:
        if not 1 <= self.frames_per_tap <= MAX_FRAMES_PER_BURST:
            raise ConfigError("frames_per_tap", f"must lie in [1, {MAX_FRAMES_PER_BURST}]")


@dataclass(frozen=True)
class Scenario:
    slaves: tuple[SlaveConfig, ...]
    seed: int = DEFAULT_SEED
    global_clock: ClockModel = field(
        default_factory=lambda: ClockModel(jitter_sigma_ps=DEFAULT_JITTER_PS)
    )
    sync: SyncConfig = field(default_factory=SyncConfig)
    eyescan: EyeScanConfig = field(default_factory=EyeScanConfig)
    # None: bring-up plus ``sync.cycles`` full round-robin cycles
    run_length_ps: int | None = None
    retries: int = 3

    def __post_init__(self) -> None:
        if not self.slaves:
            raise ConfigError("slaves", "at least one slave is required")
        seen = set()
        for i, s in enumerate(self.slaves):
            if s.id in seen:
                raise ConfigError(f"slaves[{i}].id", f"duplicate slave id {s.id}")
            seen.add(s.id)
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.run_length_ps is not None and self.run_length_ps <= 0:
            raise ConfigError("run_length_ps", "must be positive")
        if self.retries < 0:
            raise ConfigError("retries", "must be non-negative")
        if self.global_clock.nominal_period_ps % 2:
            raise ConfigError("global_clock.nominal_period_ps", "must be even")

    @property
    def period_ps(self) -> int:
        return self.global_clock.nominal_period_ps

    def slave(self, slave_id: int) -> SlaveConfig:
        for s in self.slaves:
            if s.id == slave_id:
                return s
        raise KeyError(slave_id)

    def replace(self, **changes) -> Scenario:
        return dataclasses.replace(self, **changes)

    def with_slave(self, slave_id: int, **changes) -> Scenario:
        slaves = tuple(
            dataclasses.replace(s, **changes) if s.id == slave_id else s for s in self.slaves
        )
        return self.replace(slaves=slaves)

    def to_dict(self) -> dict:
        return _to_plain(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data) -> Scenario:
        return _from_plain(cls, data, "")

    @classmethod
    def from_json(cls, text: str) -> Scenario:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"malformed JSON: {exc}") from None
        return cls.from_dict(data)


# ------------------------------------------------------------ (de)serializing


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def _join(path: str, name: str) -> str:
    return f"{path}.{name}" if path else name


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        (inner,) = [a for a in args if a is not type(None)]
        return _convert(inner, value, path)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        inner = typing.get_args(tp)[0]
        return tuple(_convert(inner, v, f"{path}[{i}]") for i, v in enumerate(value))
    if dataclasses.is_dataclass(tp):
        return _from_plain(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    raise TypeError(f"unsupported config type {tp!r}")


def _from_plain(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    for key in data:
        if key not in names:
            raise ConfigError(_join(path, key), "unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(_join(path, f.name), "missing required key")
            continue
        kwargs[f.name] = _convert(hints[f.name], data[f.name], _join(path, f.name))
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(_join(path, exc.path), exc.message) from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


# -------------------------------------------------------------------- presets


def cable_channel(length_m: float, asymmetry_ps: int = 0, **kw) -> ChannelModel:
    """Channel for a cable of ``length_m``; the downstream pair is longer by
    ``asymmetry_ps``."""
    d = cable_delay_ps(length_m)
    return ChannelModel(delay_ms_ps=d + asymmetry_ps, delay_sm_ps=d, **kw)


def fig12_scenario(seed: int = DEFAULT_SEED, **kw) -> Scenario:
    """Three slaves on equal 3 m cables."""
    slaves = tuple(SlaveConfig(i, cable_channel(3.0)) for i in (1, 2, 3))
    return Scenario(slaves=slaves, seed=seed, **kw)


def fig13_scenario(seed: int = DEFAULT_SEED, **kw) -> Scenario:
    """3 m, 80 m and 50 m cables; the 80 m pair skews by 10 ns."""
    slaves = (
        SlaveConfig(1, cable_channel(3.0)),
        SlaveConfig(2, cable_channel(80.0, asymmetry_ps=10_000)),
        SlaveConfig(3, cable_channel(50.0)),
    )
    return Scenario(slaves=slaves, seed=seed, **kw)


def ideal_scenario(n_slaves: int = 3, seed: int = DEFAULT_SEED, **kw) -> Scenario:
    slaves = tuple(SlaveConfig(i, cable_channel(3.0)) for i in range(1, n_slaves + 1))
    return Scenario(slaves=slaves, seed=seed, **kw)


def drop_scenario(message: str, slave_id: int, base: Scenario, occurrence: int = 1) -> Scenario:
    s = base.slave(slave_id)
    chan = dataclasses.replace(s.channel, drop=s.channel.drop + (DropRule(message, occurrence),))
    return base.with_slave(slave_id, channel=chan)
