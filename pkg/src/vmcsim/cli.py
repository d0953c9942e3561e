"""Command-line entry points: run, advise, replay, validate."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime

from .runtime import Simulation, advice_from_rows
from .scenario import parse_scenario, validate_scenario
from .scenarios.runner import run_scenario
from .telemetry import TelemetryPublisher, read_csv_rows


def _cmd_run(args: argparse.Namespace) -> int:
    spec = parse_scenario(args.scenario)
    problems = validate_scenario(spec)
    if problems:
        for p in problems:
            print(f"invalid scenario: {p}", file=sys.stderr)
        return 2
    mode = "fast-forward" if args.fast_forward else None
    if args.real_time:
        mode = "real-time"
    spec = spec.with_overrides(seed=args.seed, mode=mode, duration=args.duration)

    out_dir = args.out or "vmcsim-out"
    os.makedirs(out_dir, exist_ok=True)

    if spec.runtime.iteration.mode == "real-time":
        sim = Simulation(spec, out_dir=out_dir)
        ports = sim.start_servers(
            ports={"telemetry": args.telemetry_port, "command": args.command_port, "ws": args.ws_port}
        )
        print(f"telemetry stream: tcp://127.0.0.1:{ports['telemetry']}")
        print(f"command stream:   tcp://127.0.0.1:{ports['command']}")
        print(f"console gateway:  ws://127.0.0.1:{ports['ws']}")
        print(f"output directory: {out_dir}")
        try:
            sim.run()
        except KeyboardInterrupt:
            sim.stop()
        return 0

    result = run_scenario(spec, out_dir)
    if result.results:
        print(result.report_text(), end="")
        return 0 if result.passed else 1
    print(f"telemetry written to {result.csv_path}")
    return 0


def _cmd_advise(args: argparse.Namespace) -> int:
    csv_path = args.telemetry_dir
    if os.path.isdir(csv_path):
        csv_path = os.path.join(csv_path, "telemetry.csv")
    if not os.path.exists(csv_path):
        print(f"no telemetry CSV at {csv_path}", file=sys.stderr)
        return 2
    ranking = advice_from_rows(read_csv_rows(csv_path), window=args.window)
    if not ranking:
        print("no unconnected leaf slots")
        return 0
    print("grow next at (windowed resource share):")
    for leaf, share in ranking:
        print(f"  {leaf}  {share:.1%}")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    """Re-emit a recorded CSV over the telemetry stream (for the console)."""
    rows = list(read_csv_rows(args.csv))
    if not rows:
        print("empty telemetry file", file=sys.stderr)
        return 2
    publisher = TelemetryPublisher(port=args.port)
    print(f"replaying {len(rows)} records on tcp://127.0.0.1:{publisher.port} "
          f"(speed x{args.speed})")
    gateway = None
    if args.ws_port is not None:
        from .telemetry import WebSocketGateway

        registry = ""
        registry_path = os.path.join(os.path.dirname(os.path.abspath(args.csv)), "registry.txt")
        if os.path.exists(registry_path):
            with open(registry_path, encoding="utf-8") as fh:
                registry = fh.read()
        gateway = WebSocketGateway(
            lambda action: {"ok": False, "error": "replay is read-only"},
            lambda: registry,
            port=args.ws_port,
        )
        publisher.attach_sink(gateway.forward)
        print(f"console gateway:  ws://127.0.0.1:{gateway.port}")

    try:
        if args.wait > 0:
            deadline = time.monotonic() + args.wait
            while publisher.subscriber_count == 0 and time.monotonic() < deadline:
                time.sleep(0.05)
        t_prev = None
        for row in rows:
            t_row = datetime.fromisoformat(row["ts_iso8601"]).timestamp()
            if t_prev is not None and args.speed > 0:
                time.sleep(max(0.0, (t_row - t_prev) / args.speed))
            t_prev = t_row
            publisher.publish(_row_to_record(row))
        time.sleep(args.linger)
    except KeyboardInterrupt:
        pass
    finally:
        publisher.close()
        if gateway:
            gateway.close()
    return 0


def _row_to_record(row: dict):
    from .telemetry import SlotTelemetry, TelemetryRecord

    slots = tuple(
        SlotTelemetry(
            s=row[f"s_slot{k}"],
            v=row[f"v_slot{k}"],
            r=row[f"r_slot{k}"],
            live=bool(row[f"live_slot{k}"]),
            light=row[f"light_slot{k}"],
            upright=row[f"upright_slot{k}"],
        )
        for k in (1, 2)
    )
    return TelemetryRecord(
        ts=datetime.fromisoformat(row["ts_iso8601"]).timestamp(),
        module=row["module"],
        iter=int(row["iter"]),
        r_in=row["r_in"],
        r_gen=row["r_gen"],
        s_out=row["s_out"],
        slots=slots,
    )


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        spec = parse_scenario(args.scenario)
    except Exception as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    problems = validate_scenario(spec)
    if problems:
        for p in problems:
            print(f"problem: {p}")
        return 1
    print(
        f"ok: {spec.name!r} ({len(spec.modules)} modules, {len(spec.events)} events, "
        f"{len(spec.assertions)} assertions, duration {spec.runtime.duration}s)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vmcsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario file")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--fast-forward", action="store_true", help="force deterministic mode")
    run.add_argument("--real-time", action="store_true", help="force threaded wall-clock mode")
    run.add_argument("--duration", type=float, default=None, metavar="SECS")
    run.add_argument("--out", default=None, metavar="DIR")
    run.add_argument("--telemetry-port", type=int, default=0)
    run.add_argument("--command-port", type=int, default=0)
    run.add_argument("--ws-port", type=int, default=0)
    run.set_defaults(func=_cmd_run)

    advise = sub.add_parser("advise", help="rank unconnected leaves from a telemetry dir")
    advise.add_argument("telemetry_dir")
    advise.add_argument("--window", type=int, default=20)
    advise.set_defaults(func=_cmd_advise)

    replay = sub.add_parser("replay", help="re-emit a telemetry CSV to the console")
    replay.add_argument("csv")
    replay.add_argument("--port", type=int, default=0)
    replay.add_argument("--ws-port", type=int, default=None)
    replay.add_argument("--speed", type=float, default=10.0)
    replay.add_argument("--linger", type=float, default=1.0)
    replay.add_argument(
        "--wait", type=float, default=10.0, metavar="SECS",
        help="wait up to SECS for a first subscriber before playback (0 = start at once)",
    )
    replay.set_defaults(func=_cmd_replay)

    validate = sub.add_parser("validate", help="parse and semantically check a scenario")
    validate.add_argument("scenario")
    validate.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
