"""Command-line front end.

Exit codes: 0 success / no attack, 1 usage or operational error,
2 attack verdicts present (``detect`` only).
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence, TextIO

from tracewatch import kernels
from tracewatch.detector import DetectorConfig
from tracewatch.errors import TraceFormatError
from tracewatch.events import SensorId, read_log_file, write_log
from tracewatch.fingerprint import (
    DEFAULT_BUCKET_MS,
    extract_fingerprint,
    format_chain,
    group_requests,
    parse_grouping,
    summarize_classes,
)
from tracewatch.harness import (
    EXPERIMENTS,
    detect_events,
    evaluate_run,
    parse_seeds,
    run_bench,
    run_experiment,
)
from tracewatch.sensors import (
    AlertSensorConfig,
    ContinuousAggConfig,
    FilterSensorConfig,
    OneTimeAggConfig,
    Pipeline,
)
from tracewatch.sim import SCENARIOS, GroundTruth, ScenarioSpec, simulate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ATTACK = 2

log = logging.getLogger("tracewatch")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for "attack detected"
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _open_out(path: str | None) -> TextIO:
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", encoding="utf-8", newline="\n")


def cmd_simulate(args: argparse.Namespace) -> int:
    kwargs = {"kind": args.scenario, "seed": args.seed}
    if args.requests is not None:
        kwargs["requests"] = args.requests
    if args.duration_ms is not None:
        kwargs["duration_ms"] = args.duration_ms
    result = simulate(ScenarioSpec(**kwargs))
    log_path, truth_path = result.write(args.out)
    print(f"wrote {len(result.events)} events ({len(result.requests)} requests) to {log_path}", file=sys.stderr)
    print(f"wrote ground truth to {truth_path}", file=sys.stderr)
    return EXIT_OK


def _detector_config(args: argparse.Namespace) -> DetectorConfig:
    return DetectorConfig(
        period_ms=args.period_ms,
        history_periods=args.history,
        sensitivity=args.sensitivity,
        quantile=args.quantile,
        warmup_periods=args.warmup,
        global_model=args.global_model,
        bucket_ms=args.bucket_ms,
    )


def cmd_detect(args: argparse.Namespace) -> int:
    config = _detector_config(args)
    events = read_log_file(args.input)
    detection = detect_events(events, config, parse_grouping(args.grouping))
    with _OutFile(args.out) as out:
        for verdict in detection.verdicts:
            out.write(verdict.to_line() + "\n")
        if args.truth:
            report = evaluate_run(detection, GroundTruth.read(args.truth), config)
            for line in report.to_lines():
                out.write(line + "\n")
    return EXIT_ATTACK if any(v.attack for v in detection.verdicts) else EXIT_OK


def cmd_fingerprint(args: argparse.Namespace) -> int:
    events = read_log_file(args.input)
    fps = [extract_fingerprint(t, args.bucket_ms) for t in group_requests(events, parse_grouping(args.grouping))]
    classes = summarize_classes(fps)
    with _OutFile(args.out) as out:
        for c in classes:
            out.write(f"{c.class_key}\t{c.count}\t{format_chain(c.example)}\n")
    plot_path = args.plot if args.plot is not None else f"{args.input}.plot.tsv"
    with open(plot_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("class_key\tposition\tsid\tmean_duration_ms\n")
        for c in classes:
            for pos, ((sid, _), mean) in enumerate(zip(c.example, c.mean_durations())):
                if mean is not None:
                    fh.write(f"{c.class_key}\t{pos}\t{sid}\t{mean:.3f}\n")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    results = [run_bench(args.requests, args.seed) for _ in range(args.runs)]
    print("run\tbackend\trequests\tevents_generated\tevents_detected\twall_s\tevents_per_s")
    for i, r in enumerate(results):
        print(
            f"{i}\t{r.backend}\t{r.requests}\t{r.events_generated}\t{r.events_detected}\t"
            f"{r.wall_s:.3f}\t{r.events_per_s:.0f}"
        )
    print("# memory overhead is not measured; this reports throughput only", file=sys.stderr)
    return EXIT_OK if all(r.events_generated == r.events_detected for r in results) else EXIT_ERROR


def _split(spec: str, n: int, what: str) -> list[str]:
    parts = spec.split(",", n - 1)
    if len(parts) != n:
        raise ValueError(f"--{what} expects {n} comma-separated fields, got {spec!r}")
    return parts


def _number(text: str) -> int | float | None:
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def build_pipeline(args: argparse.Namespace) -> Pipeline:
    pipe = Pipeline()
    for spec in args.alert:
        sid, lo, hi = _split(spec, 3, "alert")
        pipe.alerts.append(AlertSensorConfig(SensorId.parse(sid), _number(lo), _number(hi)))
    for spec in args.filter:
        sid, out, pattern = _split(spec, 3, "filter")
        pipe.filters.append(FilterSensorConfig(SensorId.parse(sid), pattern, SensorId.parse(out)))
    for spec in args.window:
        sid, ms, op, out = _split(spec, 4, "window")
        if op == "mean":
            cfg = ContinuousAggConfig(SensorId.parse(sid), int(ms), SensorId.parse(out))
        elif op.startswith("q"):
            cfg = ContinuousAggConfig(SensorId.parse(sid), int(ms), SensorId.parse(out), "quantile", float(op[1:]))
        else:
            raise ValueError(f"--window op must be 'mean' or 'qLEVEL', got {op!r}")
        pipe.windows.append(cfg)
    for spec in args.combine:
        op, out, *inputs = spec.split(",")
        pipe.once.append(OneTimeAggConfig(tuple(SensorId.parse(s) for s in inputs), op, SensorId.parse(out)))
    return pipe


def cmd_pipeline(args: argparse.Namespace) -> int:
    pipe = build_pipeline(args)
    result = pipe.run(read_log_file(args.input))
    with _OutFile(args.out) as out:
        write_log(result.derived, out)
        for a in result.alerts:
            out.write(f"# ALERT\t{a.timestamp}\t{a.sid}\t{a.violated_bound}\t{a.bound}\t{a.observed}\n")
    return EXIT_OK


def cmd_harness(args: argparse.Namespace) -> int:
    result = run_experiment(args.name, parse_seeds(args.seeds))
    sys.stdout.write(result.to_tsv())
    return EXIT_OK if result.passed else EXIT_ERROR


class _OutFile:
    def __init__(self, path: str | None) -> None:
        self.path = path
        self.fh: TextIO | None = None

    def __enter__(self) -> TextIO:
        self.fh = _open_out(self.path)
        return self.fh

    def __exit__(self, *exc) -> None:
        if self.fh is not sys.stdout:
            self.fh.close()
        else:
            self.fh.flush()


def _add_harness_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("name", choices=EXPERIMENTS)
    p.add_argument("--seeds", default="1..10", help="e.g. 1..10 or 1,2,3 (default 1..10)")
    p.set_defaults(func=cmd_harness)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tracewatch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a scenario log and its ground truth")
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="log path; ground truth goes to PATH.truth")
    budget = p.add_mutually_exclusive_group()
    budget.add_argument("--requests", type=int, help="background request budget")
    budget.add_argument("--duration-ms", type=int, help="background duration in ms")
    p.set_defaults(func=cmd_simulate)

    defaults = DetectorConfig()
    p = sub.add_parser("detect", help="classify every period of a log")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--truth", help="ground-truth sidecar; appends a run report")
    p.add_argument("--out", help="verdict report path (default stdout)")
    p.add_argument("--period-ms", type=int, default=defaults.period_ms)
    p.add_argument("--history", type=int, default=defaults.history_periods)
    p.add_argument("--sensitivity", type=float, default=defaults.sensitivity)
    p.add_argument("--quantile", type=float, default=defaults.quantile)
    p.add_argument("--warmup", type=int, default=None, help="warm-up periods (default: --history)")
    p.add_argument("--grouping", default="tagged", help="tagged | gap:MS")
    p.add_argument("--bucket-ms", type=int, default=DEFAULT_BUCKET_MS)
    p.add_argument("--global-model", action="store_true", help="count all fingerprints as one class")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fingerprint", help="list fingerprint classes of a log")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--bucket-ms", type=int, default=DEFAULT_BUCKET_MS)
    p.add_argument("--grouping", default="tagged", help="tagged | gap:MS")
    p.add_argument("--out", help="class listing path (default stdout)")
    p.add_argument("--plot", help="plot data path (default IN.plot.tsv)")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("bench", help="simulate + detect throughput")
    p.add_argument("--requests", type=int, default=10_000)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pipeline", help="run derived sensors over a log")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="derived-event log path (default stdout)")
    p.add_argument("--alert", action="append", default=[], metavar="SID,LOWER,UPPER")
    p.add_argument("--filter", action="append", default=[], metavar="SID,OUT_SID,PATTERN")
    p.add_argument("--window", action="append", default=[], metavar="SID,MS,mean|qLEVEL,OUT_SID")
    p.add_argument("--combine", action="append", default=[], metavar="sum|product|log,OUT_SID,SID[,SID...]")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("harness", help="run a reproducible experiment")
    hsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    _add_harness_args(hsub.add_parser("run"))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        return args.func(args)
    except TraceFormatError as exc:
        print(f"tracewatch: {exc}", file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"tracewatch: {exc}", file=sys.stderr)
    return EXIT_ERROR


def harness_main(argv: Sequence[str] | None = None) -> int:
    parser = _Parser(prog="bench-harness", description="run a reproducible experiment")
    sub = parser.add_subparsers(dest="action", required=True, parser_class=_Parser)
    _add_harness_args(sub.add_parser("run"))
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"bench-harness: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
