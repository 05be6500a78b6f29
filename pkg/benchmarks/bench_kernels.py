#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Times the two hot paths (margin extraction and one SGD epoch) under both
backends and reports median wall-clock time, speedup, and the numerical
gap between the paths. Workload sizes default to the shapes the
identification pipeline actually runs.

Usage:
    python3 benchmarks/bench_kernels.py [--samples N] [--features D]
                                        [--hidden H] [--classes C]
                                        [--batch B] [--iters I]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from aumclean import kernels


def _time_median(fn, iters):
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_margins(n_records, num_classes, iters, rng):
    logits = rng.standard_normal((n_records, num_classes))
    assigned = rng.integers(0, num_classes, n_records)

    out_np = kernels._margins_numpy(logits, assigned)
    rows = [("numpy", _time_median(lambda: kernels._margins_numpy(logits, assigned), iters), out_np)]

    if kernels._HAVE_NUMBA:
        kernels._margins_numba(logits[:8], assigned[:8])  # JIT warmup
        out_nb = kernels._margins_numba(logits, assigned)
        rows.append(("numba", _time_median(lambda: kernels._margins_numba(logits, assigned), iters), out_nb))

    return rows


def bench_sgd(n, d, h, c, batch, iters, rng):
    X = rng.standard_normal((n, d))
    labels = rng.integers(0, c, n)
    perm = rng.permutation(n)

    def fresh_state():
        r = np.random.default_rng(0)
        W1 = r.standard_normal((d, h)) * np.sqrt(2.0 / d)
        W2 = r.standard_normal((h, c)) * np.sqrt(2.0 / h)
        return [W1, np.zeros(h), W2, np.zeros(c),
                np.zeros((d, h)), np.zeros(h), np.zeros((h, c)), np.zeros(c)]

    def run(fn):
        # The kernel mutates params and velocities, so every timed call
        # gets a fresh copy; the copies happen outside the timer.
        state = fresh_state()
        logits = np.empty((n, c))
        t0 = time.perf_counter()
        fn(X, labels, perm, batch, *state, 0.1, 0.9, 1e-4, logits)
        dt = time.perf_counter() - t0
        return dt, state, logits

    def timed(fn):
        times = []
        for _ in range(iters):
            dt, state, logits = run(fn)
            times.append(dt)
        return float(np.median(times)), state, logits

    t_np, state_np, logits_np = timed(kernels._sgd_epoch_numpy)
    rows = [("numpy", t_np, (state_np, logits_np))]

    if kernels._HAVE_NUMBA:
        run(kernels._sgd_epoch_numba)  # JIT warmup
        t_nb, state_nb, logits_nb = timed(kernels._sgd_epoch_numba)
        rows.append(("numba", t_nb, (state_nb, logits_nb)))

    return rows


def report(title, rows, diff_fn):
    base = rows[0][1]
    print(title)
    for label, t, _ in rows:
        speedup = base / t if t > 0 else float("inf")
        print(f"  {label:<8s} {t * 1e3:10.3f} ms   {speedup:6.2f}x")
    if len(rows) == 2:
        print(f"  max |numba - numpy|: {diff_fn(rows[0][2], rows[1][2]):.3e}")
    print()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--features", type=int, default=20)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--classes", type=int, default=11)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=50,
                    help="logged epochs to simulate for the margin workload")
    ap.add_argument("--iters", type=int, default=20)
    args = ap.parse_args()

    print(f"active backend: {kernels.BACKEND}"
          + ("" if kernels._HAVE_NUMBA else " (numba not importable)"))
    print()

    rng = np.random.default_rng(12345)

    n_records = args.samples * args.epochs
    rows = bench_margins(n_records, args.classes, args.iters, rng)
    report(f"margins_from_logits  ({n_records} records, {args.classes} classes)",
           rows, lambda a, b: float(np.max(np.abs(a - b))))

    def sgd_diff(a, b):
        state_a, logits_a = a
        state_b, logits_b = b
        worst = float(np.max(np.abs(logits_a - logits_b)))
        for pa, pb in zip(state_a, state_b):
            worst = max(worst, float(np.max(np.abs(pa - pb))))
        return worst

    rows = bench_sgd(args.samples, args.features, args.hidden, args.classes,
                     args.batch, args.iters, rng)
    report(f"sgd_epoch  ({args.samples}x{args.features}, hidden {args.hidden}, "
           f"{args.classes} classes, batch {args.batch})",
           rows, sgd_diff)


if __name__ == "__main__":
    main()
