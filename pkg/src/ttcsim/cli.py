"""Command-line front end: ``ttcsim {run,eyescan,sweep,codec}``.

Exit codes: 0 success, 2 configuration or argument error, 3 bring-up
failure, 4 no open eye window, 5 codec mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

from .codec.selftest import check_vectors, run_selftest
from .sim.campaigns import asymmetry_sweep
from .sim.network import Network, pulse_alignment
from .sim.report import report_json
from .sim.scenario import DEFAULT_SEED, ConfigError, EyeScanConfig, Scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BRINGUP = 3
EXIT_NO_WINDOW = 4
EXIT_CODEC = 5

OUT_ENV = "TTCSIM_OUT"
DEFAULT_OUT = "ttcsim_out"


class UsageError(Exception):
    pass


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def _ns(ps: float) -> str:
    return f"{ps / 1000:.3f} ns"


def load_scenario(path: str, seed: int | None) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    scenario = Scenario.from_json(text)
    if seed is not None:
        scenario = scenario.replace(seed=seed)
    return scenario


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# ------------------------------------------------------------------ commands


def cmd_run(args) -> int:
    scenario = load_scenario(args.config, args.seed)
    net = Network(scenario)
    report = net.run_bringup()
    pulses = pulse_alignment(net)
    report["pulses"] = {
        "scheduled_tick": pulses["scheduled_tick"],
        "master_ps": pulses["master"],
        "slaves": {str(k): v for k, v in pulses["slaves"].items()},
    }
    out = _out_dir(args)
    write_atomic(out / "run_report.json", report_json(report))
    rows = [["node", "pulse_ps", "offset_vs_master_ps"], ["master", pulses["master"], 0]]
    for sid, t in pulses["slaves"].items():
        rows.append([f"slave{sid}", "" if t is None else t, "" if t is None else t - pulses["master"]])
    write_atomic(out / "pulses.csv", _csv(rows))

    for e in report["slaves"]:
        if e["residual"] is None:
            print(f"slave {e['id']}: not synchronized")
            continue
        t = pulses["slaves"][e["id"]]
        print(
            f"slave {e['id']}: residual mean {_ns(e['residual']['mean_ps'])}, "
            f"pulse offset {_ns(t - pulses['master'])}, tick error {e['max_tick_error']}"
        )
    for f in report["failures"]:
        print(f"FAILED stage {f['stage']} (slave {f['slave']}): {f['reason']}", file=sys.stderr)
    return EXIT_OK if report["ok"] else EXIT_BRINGUP


def cmd_eyescan(args) -> int:
    scenario = load_scenario(args.config, args.seed)
    if args.frames is not None:
        scenario = scenario.replace(eyescan=EyeScanConfig(args.frames))
    try:
        scenario.slave(args.slave)
    except KeyError:
        raise ConfigError("slave", f"no slave with id {args.slave}") from None
    net = Network(scenario)
    net.run_bringup(stop_after="error_free_check")
    s = net.slaves[args.slave]
    if s.scan is None:
        for f in net.failures:
            if f.slave == args.slave:
                print(f"FAILED stage {f.stage} (slave {f.slave}): {f.reason}", file=sys.stderr)
        return EXIT_BRINGUP
    write_atomic(_out_dir(args) / f"eyescan_{args.slave}.csv", s.scan.to_csv())
    if not s.scan.open:
        print(f"slave {args.slave}: no open window", file=sys.stderr)
        return EXIT_NO_WINDOW
    first, last = s.scan.window
    print(f"slave {args.slave}: window ≈ {s.scan.width} taps [{first}..{last}], best tap {s.scan.best_tap}")
    return EXIT_OK


def parse_asym_list(text: str) -> list[int]:
    items = [x.strip() for x in text.split(",")]
    if not text.strip() or any(not x for x in items):
        raise UsageError("--asym-list must be a non-empty comma-separated list of integers (ps)")
    try:
        return [int(x) for x in items]
    except ValueError:
        raise UsageError(f"--asym-list: cannot parse {text!r} as integers") from None


def cmd_sweep(args) -> int:
    values = parse_asym_list(args.asym_list)
    scenario = load_scenario(args.config, args.seed)
    rows = asymmetry_sweep(scenario, values)
    table = [["asymmetry_ps", "mean_residual_ps", "max_tick_error"]]
    for r in rows:
        table.append([r.asymmetry_ps, r.mean_residual_ps, r.max_tick_error])
        print(f"A = {_ns(r.asymmetry_ps)}: residual {_ns(r.mean_residual_ps)}, tick error {r.max_tick_error}")
    write_atomic(_out_dir(args) / "sweep.csv", _csv(table))
    return EXIT_OK


def cmd_codec(args) -> int:
    if args.selftest:
        failure = run_selftest(args.seed)
        if failure:
            print(f"FAIL {failure}", file=sys.stderr)
            return EXIT_CODEC
        print("codec selftest passed")
        return EXIT_OK
    try:
        doc = json.loads(Path(args.vector).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("vector", str(exc)) from None
    try:
        failure = check_vectors(doc)
    except ValueError as exc:
        raise ConfigError("vector", str(exc)) from None
    if failure:
        print(f"FAIL {failure}", file=sys.stderr)
        return EXIT_CODEC
    print(f"{len(doc['frames'])} vectors passed")
    return EXIT_OK


# ------------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help=f"override the scenario seed (scenario files default to {DEFAULT_SEED})",
    )
    common.add_argument(
        "--out",
        default=None,
        help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})",
    )

    p = argparse.ArgumentParser(
        prog="ttcsim",
        description="Simulate PTP-style time distribution over a TTC serial link.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    fmt = {"formatter_class": argparse.ArgumentDefaultsHelpFormatter}

    r = sub.add_parser("run", parents=[common], **fmt, help="full bring-up plus pulse alignment")
    r.add_argument("--config", required=True, help="scenario JSON file")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eyescan", parents=[common], **fmt, help="bring-up through calibration, dump one bathtub")
    e.add_argument("--config", required=True)
    e.add_argument("--slave", type=int, required=True, help="slave id to report")
    e.add_argument("--frames", type=int, default=None, help="frames per tap (default: scenario value, 200)")
    e.set_defaults(func=cmd_eyescan)

    s = sub.add_parser("sweep", parents=[common], **fmt, help="one bring-up per cable asymmetry value")
    s.add_argument("--config", required=True)
    s.add_argument("--asym-list", required=True, help='asymmetries in ps, e.g. "0,10000,50000"')
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("codec", **fmt, help="codec self-test or golden-vector check")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--vector", help="vector JSON {frames: [...], expected_bits: [...]}")
    g.add_argument("--selftest", action="store_true")
    c.add_argument("--seed", type=int, default=0, help="seed of the randomized self-test cases")
    c.set_defaults(func=cmd_codec)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
