#!/usr/bin/env python3
"""Benchmark the PWM sampling kernel: compiled extension vs numpy fallback.

The kernel is the simulator's hot inner loop: every receiver generates
~1000 line samples per simulated second, and a fast-forward scenario run
pushes tens of millions of samples through these queues.

Usage: python benchmarks/bench_kernels.py [--samples N]
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np

from vmcsim import _pwm_py

CAP = 5000
SPP = 10
DUTY_SPP = 0.73 * SPP


def run_backend(impl, total_samples: int, chunk: int) -> float:
    ring = np.zeros(CAP, dtype=np.uint8)
    head = filled = ones = 0
    pos = 0
    t0 = time.perf_counter()
    remaining = total_samples
    while remaining > 0:
        n = min(chunk, remaining)
        head, filled, ones, pos = impl.fill_samples(
            ring, head, filled, ones, 12345, pos, n, DUTY_SPP, SPP
        )
        remaining -= n
    return time.perf_counter() - t0


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=20_000_000)
    args = parser.parse_args()

    backends = [("python (numpy)", _pwm_py)]
    try:
        backends.insert(0, ("cython", importlib.import_module("vmcsim._pwm_cy")))
    except ImportError:
        print("compiled kernel not built; benchmarking the fallback only\n")

    chunks = [50, 200, 1000, 5000, 20000]
    print(f"{args.samples:,} samples per cell, duty 0.73, queue {CAP}\n")
    header = f"{'chunk size':>12} | " + " | ".join(f"{name:>16}" for name, _ in backends)
    if len(backends) == 2:
        header += " | speedup"
    print(header)
    print("-" * len(header))

    for chunk in chunks:
        times = []
        for _, impl in backends:
            run_backend(impl, min(args.samples, 200_000), chunk)  # warm up
            times.append(run_backend(impl, args.samples, chunk))
        cells = " | ".join(
            f"{args.samples / t / 1e6:13.1f} M/s" for t in times
        )
        line = f"{chunk:>12} | {cells}"
        if len(times) == 2:
            line += f" | {times[1] / times[0]:6.2f}x"
        print(line)

    # sanity: both backends agree bit-for-bit
    if len(backends) == 2:
        a = np.zeros(CAP, dtype=np.uint8)
        b = np.zeros(CAP, dtype=np.uint8)
        sa = backends[0][1].fill_samples(a, 0, 0, 0, 7, 0, 12_345, DUTY_SPP, SPP)
        sb = backends[1][1].fill_samples(b, 0, 0, 0, 7, 0, 12_345, DUTY_SPP, SPP)
        assert sa == sb and np.array_equal(a, b), "backends diverged"
        print("\nbackends agree bit-for-bit on a 12,345-sample cross-check")


if __name__ == "__main__":
    main()
