"""Replay throughput: pure-Python streaming classes vs compiled kernels.

Runs every detector over the same synthetic trace with both backends and
prints frames/s plus the speedup. The compiled path must produce the
identical verdict stream (the test suite asserts bit-for-bit equality),
so the only thing measured here is speed.

    python3 benchmarks/throughput.py --duration 120 --repeat 3
"""

from __future__ import annotations

import argparse
import time

from cantids.detectors import DETECTORS, DetectorConfig
from cantids.profile import estimate_cycle_times
from cantids.replay import available_backends, run_detector
from cantids.synth import generate_traffic


def best_of(n: int, fn):
    times = []
    for _ in range(n):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=120.0,
                    help="trace length in seconds (default 120)")
    ap.add_argument("--seed", type=int, default=9)
    ap.add_argument("--repeat", type=int, default=3,
                    help="runs per measurement, best taken (default 3)")
    args = ap.parse_args()

    trace = generate_traffic(args.duration, seed=args.seed)
    model = estimate_cycle_times([trace])
    config = DetectorConfig()
    backends = available_backends()
    n = len(trace)
    print(f"{n} frames, backends: {', '.join(backends)}")

    header = f"{'detector':<12}"
    for b in backends:
        header += f" {b + ' fr/s':>16}"
    if len(backends) > 1:
        header += f" {'speedup':>9}"
    print(header)

    seen = set()
    for name in sorted(DETECTORS):
        if DETECTORS[name] in seen:
            continue            # song16 aliases gmiden16
        seen.add(DETECTORS[name])
        rates = []
        for backend in backends:
            dt = best_of(args.repeat, lambda: run_detector(
                name, model, config, trace, backend=backend))
            rates.append(n / dt)
        line = f"{name:<12}"
        for rate in rates:
            line += f" {rate:>16,.0f}"
        if len(rates) > 1:
            line += f" {rates[-1] / rates[0]:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
