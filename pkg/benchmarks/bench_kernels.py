"""Timing comparison of the compiled filter kernels against the pure
Python fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --frames 500 --order 30

Both backends produce bit-identical float64 output; this script reports
what the compiled extension buys in wall time.
"""

import argparse
import time

import numpy as np

from mfccsynth.kernels import BACKEND, py_ref

try:
    from mfccsynth.kernels import _core
except ImportError:
    _core = None


def time_call(fn, *args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def smooth_autocorrelations(frames, order, rng):
    spec = np.exp(rng.standard_normal((frames, 64)) * 0.3)
    smooth = np.fft.irfft(np.fft.rfft(spec, axis=1)[:, :5], 64, axis=1)
    power = np.exp(smooth) ** 2
    full = np.concatenate([power, power[:, -2:0:-1]], axis=1)
    r = np.fft.irfft(full, axis=1)[:, :order + 1]
    r[:, 0] *= 1.0 + 1e-6
    return np.ascontiguousarray(r)


def main():
    parser = argparse.ArgumentParser(
        description="compare compiled and pure Python filter kernels")
    parser.add_argument("--frames", type=int, default=400,
                        help="number of analysis frames (default 400)")
    parser.add_argument("--order", type=int, default=30,
                        help="all-pole order (default 30)")
    parser.add_argument("--hop", type=int, default=80,
                        help="samples per frame (default 80)")
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions, best-of (default 5)")
    args = parser.parse_args()

    if _core is None:
        print("compiled extension not importable; showing fallback only")
    print(f"active package backend: {BACKEND}")
    print(f"workload: {args.frames} frames, order {args.order}, "
          f"hop {args.hop}")
    print()

    rng = np.random.default_rng(0)
    r = smooth_autocorrelations(args.frames, args.order, rng)
    n = args.frames * args.hop
    x = rng.standard_normal(n)
    coeffs, _ = py_ref.levinson_batch(r, args.order, 1e-6)
    fos = np.minimum(np.arange(n) // args.hop,
                     args.frames - 1).astype(np.int64)

    cases = [
        ("levinson_batch", lambda impl: impl.levinson_batch(
            r, args.order, 1e-6)),
        ("inverse_filter", lambda impl: impl.inverse_filter(
            x, coeffs, fos)),
        ("synthesis_filter", lambda impl: impl.synthesis_filter(
            x, coeffs, fos)),
    ]

    header = f"{'kernel':<18} {'python':>10} {'compiled':>10} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_py = time_call(call, py_ref, repeat=args.repeat)
        if _core is not None:
            t_c = time_call(call, _core, repeat=args.repeat)
            out_py, out_c = call(py_ref), call(_core)
            if isinstance(out_py, tuple):
                out_py, out_c = out_py[0], out_c[0]
            same = np.array_equal(np.asarray(out_py), np.asarray(out_c))
            note = "" if same else "  (outputs differ!)"
            print(f"{name:<18} {t_py * 1e3:>8.2f}ms {t_c * 1e3:>8.2f}ms "
                  f"{t_py / t_c:>8.1f}x{note}")
        else:
            print(f"{name:<18} {t_py * 1e3:>8.2f}ms {'-':>10} {'-':>9}")


if __name__ == "__main__":
    main()
