"""Compare the compiled and pure-Python t-logistic kernels.

    python3 benchmarks/bench_kernels.py [--points 20000] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from imbreg import _purepy

try:
    from imbreg import _kernels
except ImportError:  # extension not built
    _kernels = None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    z = np.random.default_rng(0).uniform(-50.0, 50.0, args.points)
    backends = {"python": _purepy.tlogistic_eval}
    if _kernels is not None:
        backends["cython"] = _kernels.tlogistic_eval
    else:
        print("compiled extension unavailable; timing the Python kernel only")

    print(f"{'t':>6} {'backend':>8} {'best [ms]':>10} {'speed-up':>9} {'max |diff|':>11}")
    for t in (-1.0, 0.5, 2.0, 3.0):
        ref = None
        base = None
        for name, fn in backends.items():
            best = min(timeit.repeat(lambda: fn(t, z), number=1, repeat=args.repeat))
            out = np.stack(fn(t, z))
            if ref is None:
                ref, base = out, best
                diff = 0.0
            else:
                finite = np.isfinite(ref) & np.isfinite(out)
                diff = float(np.max(np.abs(ref[finite] - out[finite])))
            print(f"{t:>6g} {name:>8} {1e3 * best:>10.2f} {base / best:>8.1f}x {diff:>11.2e}")


if __name__ == "__main__":
    main()
