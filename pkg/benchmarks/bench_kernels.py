"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Times each hot kernel on inputs shaped like real simulator output, then
the end-to-end parse + detect loop with each backend swapped in.
"""

from __future__ import annotations

import argparse
import io
import random
import timeit

from tracewatch import events, kernels
from tracewatch.detector import detect_stream
from tracewatch.sim import ScenarioSpec, simulate


def _swap(backend) -> None:
    # the modules bind kernel functions through ``kernels``; patch there
    for name in ("split_record", "split_sid", "quantize", "nearest_rank"):
        setattr(kernels, name, getattr(backend, name))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--requests", type=int, default=5000)
    args = parser.parse_args()

    log = simulate(ScenarioSpec(kind="probe", seed=1, requests=args.requests)).text()
    lines = log.splitlines()
    sids = [line.split(",", 3)[2] for line in lines]
    rng = random.Random(0)
    durations = [rng.randint(1, 900) for _ in range(200_000)]
    histories = [[rng.randint(0, 400) for _ in range(30)] for _ in range(20_000)]

    original = {n: getattr(kernels, n) for n in ("split_record", "split_sid", "quantize", "nearest_rank")}
    rows = []
    for name in kernels.available_backends():
        mod = kernels.load_backend(name)
        _swap(mod)
        events._parse_sid.cache_clear()
        timings = {
            "split_record": lambda: [mod.split_record(line) for line in lines],
            "split_sid": lambda: [mod.split_sid(s) for s in sids],
            "quantize": lambda: mod.quantize(durations, 3),
            "nearest_rank": lambda: [mod.nearest_rank(h, 29) for h in histories],
            "parse+detect": lambda: list(detect_stream(list(events.read_log(io.StringIO(log))))),
        }
        for kernel, fn in timings.items():
            if kernel == "parse+detect":
                events._parse_sid.cache_clear()
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            rows.append((kernel, name, best))
    for n, fn in original.items():
        setattr(kernels, n, fn)

    base = {k: t for k, b, t in rows if b == "python"}
    print(f"{'kernel':<14}{'backend':<9}{'best_s':>10}{'speedup':>9}")
    for kernel, name, best in rows:
        print(f"{kernel:<14}{name:<9}{best:>10.4f}{base[kernel] / best:>8.2f}x")
    print(f"# {len(lines)} log lines")


if __name__ == "__main__":
    main()
