"""Compare the compiled VM core against the pure-Python fallback.

Usage: python benchmarks/bench_vm.py [--size N] [--repeat K]
"""

import argparse
import time

from stmlforge.cparse import parse
from stmlforge.interp import Env, available_backends, equivalent, run

WORKLOAD = """\
float c[N], v[N], w[N], a, b;
int i, t;
for (t = 0; t < 50; t++) {
    for (i = 0; i < N; i++) {
        c[i] = a * v[i] + b * w[i];
    }
    for (i = 1; i < N - 1; i++) {
        c[i] = c[i - 1] + c[i + 1] - 2 * c[i];
    }
    a = a * 1.000001;
}
"""


def bench(backend: str, size: int, repeat: int) -> float:
    program = parse(WORKLOAD)
    env = Env(
        scalars={"N": size, "a": 1.5, "b": -0.5},
        arrays={"v": [x * 0.01 for x in range(size)], "w": [0.5] * size},
    )
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        run(program, env, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    results = {}
    for backend in available_backends():
        results[backend] = bench(backend, args.size, args.repeat)
        per_iter = results[backend] / (args.size * 100)
        print(f"{backend:>8}: {results[backend] * 1e3:8.2f} ms ({per_iter * 1e9:7.1f} ns/element)")
    if "cython" in results:
        print(f"speedup: {results['python'] / results['cython']:.1f}x")

    program = parse(WORKLOAD)
    for backend in available_backends():
        start = time.perf_counter()
        report = equivalent(program, program, trials=50, backend=backend)
        took = time.perf_counter() - start
        print(f"equivalence 50 trials on {backend:>8}: {took * 1e3:7.1f} ms (passed={report.passed})")


if __name__ == "__main__":
    main()
