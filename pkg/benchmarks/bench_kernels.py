"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from holoqhd import _kernels_py

try:
    from holoqhd import _kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    n = 32
    t = rng.uniform(-4, 4, (n**3, 3))
    ang = 2 * np.pi * np.arange(64) / 64
    nodes = np.stack([1.5 * np.cos(ang), 1.5 * np.sin(ang), np.zeros_like(ang)], axis=1)
    nxt = np.roll(nodes, -1, axis=0)
    mids, seg = np.ascontiguousarray(0.5 * (nodes + nxt)), np.ascontiguousarray(nxt - nodes)
    vals = rng.standard_normal((n, n, n))
    idx = rng.uniform(0, n, (20000, 3))
    return {
        "biot_savart 32^3 x 64": lambda m: m.biot_savart(t, mids, seg, 0.3),
        "cubic_interp 20000 pts": lambda m: m.cubic_interp(vals, idx),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    impls = [("python", _kernels_py)] + ([("compiled", compiled)] if compiled else [])
    print(f"{'kernel':28s} " + " ".join(f"{name:>12s}" for name, _ in impls) + "     speedup")
    for label, fn in cases(rng).items():
        times = [min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) for _, m in impls]
        speed = f"{times[0] / times[1]:10.1f}x" if len(times) == 2 else "         -"
        print(f"{label:28s} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times) + "  " + speed)
    if compiled is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
