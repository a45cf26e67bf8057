"""Command-line entry point: validate / gen / serve / read / bench / codec.

Exit codes are stable: 0 success, 1 validation/usage failure, 2 connection
failure, 3 protocol exception or frame violation, 4 I/O error. Every error
path prints a single machine-parsable line ``error: <category>: <text>`` to
stderr. ``MODBUSKIT_ENDPOINT`` overrides the endpoint of any model or
descriptor, as does ``--endpoint``.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, bench, codec, emulator, model, planner, report
from .connector import ConnectorConfig, ModbusConnector, connect
from .errors import (
    BenchmarkAborted,
    CodecError,
    ConnectError,
    ExceptionResponse,
    FrameError,
    ModelError,
    ProfileError,
    TransportError,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONNECT = 2
EXIT_PROTOCOL = 3
EXIT_IO = 4

ENDPOINT_ENV = "MODBUSKIT_ENDPOINT"


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with the validation code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modbuskit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"modbuskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND",
                              parser_class=_Parser)

    p = sub.add_parser("validate",
                       help="check a model document against all rules")
    p.add_argument("model", help="model document path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen",
                       help="emit the connector instance descriptor for a model")
    p.add_argument("model", help="model document path")
    p.add_argument("--gap", type=int, default=planner.DEFAULT_GAP_THRESHOLD,
                   help="max dead registers to read over (default %(default)s)")
    p.add_argument("--out", help="write the descriptor here instead of stdout")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("serve",
                       help="run the device emulator")
    p.add_argument("profile", help="bundled profile name ('default', "
                                   "'sentron-like', 'eem-like') or document path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=1502)
    p.add_argument("--latency-fixed", type=float, metavar="US",
                   help="override the profile's fixed delay [us]")
    p.add_argument("--latency-jitter", metavar="SPEC",
                   help="override jitter: none | uniform(a,b) | normal(mu,sigma)")
    p.add_argument("--seed", type=int, help="override the latency RNG seed")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("read",
                       help="read all model fields once, or keep polling")
    p.add_argument("source", help="model document or descriptor path")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--once", action="store_true", help="single batch (default)")
    mode.add_argument("--poll", type=float, metavar="MS",
                      help="poll every MS milliseconds until interrupted")
    _connection_flags(p)
    p.set_defaults(func=cmd_read)

    p = sub.add_parser("bench",
                       help="measure batch read latency and print the summary table")
    p.add_argument("source", help="model document or descriptor path")
    p.add_argument("--batches", type=int, default=bench.DEFAULT_BATCHES,
                   help="batches per repetition (default %(default)s)")
    p.add_argument("--reps", type=int, default=bench.DEFAULT_REPETITIONS,
                   help="repetitions (default %(default)s)")
    p.add_argument("--settle", type=int, default=bench.DEFAULT_SETTLE,
                   help="settling batches removed from stats (default %(default)s)")
    p.add_argument("--subject", help="subject label (default: model device name)")
    p.add_argument("--out", metavar="DIR",
                   help="archive logs, stats.csv and figures under DIR")
    _connection_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("codec",
                       help="convert between values and register words")
    codec_sub = p.add_subparsers(dest="codec_command", required=True, metavar="OP",
                                 parser_class=_Parser)
    d = codec_sub.add_parser("decode",
                             help="registers -> value")
    d.add_argument("--type", required=True, dest="dtype")
    d.add_argument("--order", default="big")
    d.add_argument("words", nargs="+", help="register words as hex, e.g. 3F80 0000")
    d.set_defaults(func=cmd_codec_decode)
    e = codec_sub.add_parser("encode",
                             help="value -> registers")
    e.add_argument("--type", required=True, dest="dtype")
    e.add_argument("--order", default="big")
    e.add_argument("value")
    e.set_defaults(func=cmd_codec_encode)

    return parser


def _connection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gap", type=int, default=planner.DEFAULT_GAP_THRESHOLD,
                   help="max dead registers to read over (default %(default)s)")
    p.add_argument("--endpoint", help=f"override the endpoint (also {ENDPOINT_ENV})")
    p.add_argument("--timeout", type=float, default=1.0,
                   help="response timeout in seconds (default %(default)s)")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ModelError, ProfileError, CodecError) as exc:
        return _fail("model" if isinstance(exc, ModelError)
                     else "profile" if isinstance(exc, ProfileError) else "codec", exc)
    except ConnectError as exc:
        return _fail("connect", exc, EXIT_CONNECT)
    except BenchmarkAborted as exc:
        return _fail("bench", exc, EXIT_CONNECT)
    except TransportError as exc:
        return _fail("transport", exc, EXIT_CONNECT)
    except ExceptionResponse as exc:
        return _fail("exception", exc, EXIT_PROTOCOL)
    except FrameError as exc:
        return _fail("frame", exc, EXIT_PROTOCOL)
    except OSError as exc:
        return _fail("io", exc, EXIT_IO)
    except KeyboardInterrupt:
        return EXIT_OK


def _fail(category: str, exc: BaseException, code: int = EXIT_VALIDATION) -> int:
    print(f"error: {category}: {exc}", file=sys.stderr)
    return code


# --- shared helpers ------------------------------------------------------------


def _load_plan(args) -> planner.BatchPlan:
    """Load a model document or descriptor, applying endpoint overrides."""
    text = Path(args.source).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        # a descriptor already fixes the gap it was generated with
        plan = planner.load_descriptor(text)
    else:
        plan = planner.build_plan(model.parse_model(text, source=args.source), args.gap)
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
    if endpoint:
        host, port = model.parse_endpoint(endpoint)
        plan = planner.with_endpoint(plan, host, port)
    return plan


def _connector_for(plan: planner.BatchPlan, args) -> ModbusConnector:
    config = ConnectorConfig.for_model(plan.model, response_timeout=args.timeout)
    return connect(plan.model, config)


def _record_line(index: int, item_time: float, duration_us: int, record) -> str:
    return json.dumps(
        {
            "index": index,
            "timestamp": round(item_time, 6),
            "duration_us": duration_us,
            "fields": {name: sample.value for name, sample in record.items()},
        }
    )


# --- commands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    m = model.parse_model_file(args.model)
    violations = model.validate(m)
    for v in violations:
        print(f"{v.severity}: model: {v}", file=sys.stderr)
    if model.has_errors(violations):
        return EXIT_VALIDATION
    print(f"ok: {len(m.fields)} fields, {len(violations)} warnings")
    return EXIT_OK


def cmd_gen(args) -> int:
    m = model.parse_model_file(args.model)
    plan = planner.build_plan(m, args.gap)
    text = planner.dump_descriptor(plan)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    profile = emulator.resolve_profile(args.profile)
    overrides = {}
    if args.latency_fixed is not None:
        overrides["fixed_us"] = args.latency_fixed
    if args.latency_jitter is not None:
        overrides["jitter"] = emulator.parse_jitter(args.latency_jitter)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        profile = replace(profile, latency=replace(profile.latency, **overrides))
    handle = emulator.serve((args.host, args.port), profile)
    print(f"listening on {handle.endpoint} (profile: {profile.name})", flush=True)
    signal.signal(signal.SIGTERM, lambda *_: (_ for _ in ()).throw(KeyboardInterrupt()))
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return EXIT_OK
    finally:
        handle.stop()


def cmd_read(args) -> int:
    plan = _load_plan(args)
    with _connector_for(plan, args) as conn:
        if args.poll is None:
            started = time.perf_counter_ns()
            record = conn.read_batch(plan)
            duration_us = (time.perf_counter_ns() - started) // 1000
            print(_record_line(0, time.time(), duration_us, record))
            return EXIT_OK

        failed = False

        def sink(item) -> None:
            nonlocal failed
            if item.error is not None:
                failed = True
                print(f"error: poll: batch {item.index}: {item.error}", file=sys.stderr)
            else:
                print(_record_line(item.index, item.timestamp, item.duration_us, item.record),
                      flush=True)

        try:
            conn.poll(plan, sink, interval=args.poll / 1000.0)
        except KeyboardInterrupt:
            pass
        return EXIT_CONNECT if failed else EXIT_OK


def cmd_bench(args) -> int:
    plan = _load_plan(args)
    subject = args.subject or plan.model.device or "bench"
    with _connector_for(plan, args) as conn:
        logs = bench.run_benchmark(
            conn,
            plan,
            batches=args.batches,
            repetitions=args.reps,
            subject=subject,
            archive_dir=args.out,
        )
    stats = [bench.compute_stats(log, args.settle) for log in logs]
    table, rows = report.emit_table({subject: stats})
    sys.stdout.write(table)
    if args.out:
        report.write_stats_csv(rows, args.out)
        report.render_figures({subject: logs}, args.out, settle=args.settle)
    return EXIT_OK


def _parse_word(text: str) -> int:
    try:
        word = int(text, 16)
    except ValueError:
        raise CodecError(f"not a hex register word: {text!r}") from None
    if not 0 <= word <= 0xFFFF:
        raise CodecError(f"register word out of range: {text!r}")
    return word


def cmd_codec_decode(args) -> int:
    dtype = codec.parse_data_type(args.dtype)
    order = codec.parse_byte_order(args.order)
    registers = [_parse_word(w) for w in args.words]
    value = codec.decode_value(registers, dtype, order)
    print(value)
    return EXIT_OK


def cmd_codec_encode(args) -> int:
    dtype = codec.parse_data_type(args.dtype)
    order = codec.parse_byte_order(args.order)
    value = _parse_value(args.value, dtype)
    words = codec.encode_value(value, dtype, order)
    print(" ".join(f"{w:04X}" for w in words))
    return EXIT_OK


def _parse_value(text: str, dtype: codec.DataType):
    if dtype.is_string:
        return text
    if dtype.name.startswith("float"):
        try:
            return float(text)
        except ValueError:
            raise CodecError(f"not a number: {text!r}") from None
    try:
        return int(text, 0)
    except ValueError:
        raise CodecError(f"not an integer: {text!r}") from None


if __name__ == "__main__":
    sys.exit(main())
