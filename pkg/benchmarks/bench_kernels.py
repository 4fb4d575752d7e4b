"""Compare the compiled kernel backend against the pure NumPy/SciPy one.

Runs the three hot kernels on pipeline-shaped workloads and prints a
table of per-call times (median over repeats) plus the speedup. The
compiled column is skipped with a note if the extension is missing.

Usage: python3 benchmarks/bench_kernels.py [--repeats 9] [--scale 1]
"""

import argparse
import statistics
import time

import numpy as np

from attnloc._kernels import pure

try:
    from attnloc._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _workloads(scale, rng):
    side = 256 * scale
    mask = rng.random((side, side)) < 0.5
    img = rng.random((512 * scale, 512 * scale))
    kernel = np.exp(-0.5 * (np.arange(-24, 25) / 8.0) ** 2)
    kernel /= kernel.sum()
    small = rng.random((16, 16))
    return [
        (f"label_components {side}x{side} p=0.5 conn=8",
         lambda be: be.label_components(mask, 8)),
        (f"convolve1d_clamp {img.shape[0]}x{img.shape[1]} taps={kernel.size}",
         lambda be: be.convolve1d_clamp(img, kernel, 0)),
        (f"bilinear_resize 16x16 -> {512 * scale}x{512 * scale}",
         lambda be: be.bilinear_resize(small, 512 * scale, 512 * scale)),
    ]


def _check_agreement(fn):
    """Backends must agree before their timings are comparable."""
    a = fn(pure)
    b = fn(_core)
    if a.dtype == np.int32:  # labels: same partition, numbering may differ
        assert (a > 0).sum() == (b > 0).sum()
        assert a.max() == b.max()
    else:
        assert np.abs(a - b).max() <= 1e-12


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=9)
    ap.add_argument("--scale", type=int, default=1,
                    help="multiply workload side lengths")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    rows = []
    for name, fn in _workloads(args.scale, rng):
        t_pure = _time(lambda: fn(pure), args.repeats)
        if _core is not None:
            _check_agreement(fn)
            t_core = _time(lambda: fn(_core), args.repeats)
            rows.append((name, t_pure, t_core, t_pure / t_core))
        else:
            rows.append((name, t_pure, None, None))

    w = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{w}}  {'pure ms':>9}  {'compiled ms':>11}  {'speedup':>7}")
    for name, tp, tc, sp in rows:
        if tc is None:
            print(f"{name:<{w}}  {tp * 1e3:>9.3f}  {'n/a':>11}  {'n/a':>7}")
        else:
            print(f"{name:<{w}}  {tp * 1e3:>9.3f}  {tc * 1e3:>11.3f}  {sp:>6.2f}x")
    if _core is None:
        print("\ncompiled extension not built; showing pure backend only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
