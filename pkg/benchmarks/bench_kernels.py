"""Compare the compiled and pure-Python ENMO/bout kernels.

    python3 benchmarks/bench_kernels.py [--minutes 60] [--repeat 5]

Each kernel runs on the same one-band trace; the script checks that the
backends agree bit for bit before timing them, then prints the best of
``--repeat`` runs and the speedup.
"""
import argparse
import sys
import timeit

import numpy as np

from motionpi.signal.kernels import available_backends


def make_trace(minutes: float, rate: float = 32.0, seed: int = 0):
    rng = np.random.default_rng(seed)
    n = int(minutes * 60 * rate)
    t = 1.7e9 + np.arange(n) / rate
    ax, ay = rng.normal(0, 0.05, n), rng.normal(0, 0.05, n)
    az = 1.0 + 0.3 * np.sin(2 * np.pi * 2.0 * t) + rng.normal(0, 0.05, n)
    return t, ax, ay, az


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--minutes", type=float, default=60.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = available_backends()
    t, ax, ay, az = make_trace(args.minutes)
    flags = (np.arange(int(args.minutes * 4)) % 3 == 0).astype(np.uint8)
    cases = {
        "enmo": lambda k: k.enmo(ax, ay, az),
        "bout_reduce": lambda k: k.bout_reduce(t, ax, ay, az, float(t[0]), 15.0),
        "window_counts": lambda k: k.window_counts(flags, 28),
    }

    ref = backends["python"]
    for name, fn in cases.items():
        expected = fn(ref)
        for bname, mod in backends.items():
            got = fn(mod)
            pairs = zip(got, expected) if isinstance(expected, tuple) else [(got, expected)]
            for a, b in pairs:
                if not np.array_equal(np.asarray(a), np.asarray(b)):
                    print(f"{name}: {bname} disagrees with the python backend", file=sys.stderr)
                    return 1

    print(f"{len(t)} samples ({args.minutes:g} min at 32 Hz); best of {args.repeat}")
    print(f"{'kernel':<14}" + "".join(f"{b:>14}" for b in backends) + "     speedup")
    for name, fn in cases.items():
        best = {}
        for bname, mod in backends.items():
            timer = timeit.Timer(lambda: fn(mod))
            loops, _ = timer.autorange()
            best[bname] = min(timer.repeat(args.repeat, loops)) / loops
        row = f"{name:<14}" + "".join(f"{best[b] * 1e3:>11.3f} ms" for b in backends)
        if "cython" in best:
            row += f"  {best['python'] / best['cython']:>8.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
