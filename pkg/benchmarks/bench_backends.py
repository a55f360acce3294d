"""Time the compiled kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_backends.py [--n 200000] [--repeats 5]

Each kernel is timed on identical inputs under both backends; the first
compiled call is excluded (jit warmup).  Outputs are also cross-checked
so the benchmark doubles as a quick agreement test.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from poisson_relax import _backend
from poisson_relax._kernels_numpy import KIND_CUBIC, KIND_SIGMOID
from poisson_relax.poisson import lnfact_table
from poisson_relax.rng import RngStream


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000, help="batch size")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rate, tau, M = 20.0, 0.5, 64
    rates = np.full(args.n, rate)
    lnfact = lnfact_table(M)[:M]
    key, start = RngStream(0).reserve(args.n * M)

    cases = {
        "eat-sigmoid": lambda: _backend.eat_batch(rates, M, tau, KIND_SIGMOID, key, start),
        "eat-cubic": lambda: _backend.eat_batch(rates, M, tau, KIND_CUBIC, key, start),
        "hard-count": lambda: _backend.hard_count_batch(rates, M, key, start),
        "gsm": lambda: _backend.gsm_batch(rates, lnfact, M, tau, key, start),
    }

    results: dict[str, dict[str, float]] = {name: {} for name in cases}
    outputs: dict[str, dict[str, object]] = {name: {} for name in cases}
    for backend in ("numba", "numpy"):
        try:
            _backend.set_backend(backend)
        except Exception as exc:  # numba may be absent
            print(f"skipping backend {backend}: {exc}")
            continue
        for name, fn in cases.items():
            fn()  # warmup / compile
            results[name][backend] = _time(fn, args.repeats)
            outputs[name][backend] = fn()

    print(f"\nbatch={args.n}  rate={rate}  tau={tau}  M={M}  (best of {args.repeats})")
    print(f"{'kernel':<14}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name in cases:
        r = results[name]
        if "numba" in r and "numpy" in r:
            line = f"{name:<14}{r['numba']:>12.4f}{r['numpy']:>12.4f}{r['numpy'] / r['numba']:>10.2f}"
        else:
            got = ", ".join(f"{k}={v:.4f}s" for k, v in r.items())
            line = f"{name:<14}  {got or 'no backend available'}"
        print(line)

    for name, outs in outputs.items():
        if "numba" in outs and "numpy" in outs:
            a, b = outs["numba"], outs["numpy"]
            if isinstance(a, tuple):
                ok = all(np.allclose(x, y, rtol=1e-9, atol=1e-12) for x, y in zip(a, b))
            else:
                ok = bool(np.array_equal(a, b))
            print(f"agreement {name}: {'ok' if ok else 'MISMATCH'}")


if __name__ == "__main__":
    main()
