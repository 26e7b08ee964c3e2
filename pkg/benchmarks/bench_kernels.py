"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--rows 20000] [--dim 256] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from tcsauto import _backend


def bench(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=256)
    ap.add_argument("--words", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    matrix = rng.standard_normal((args.rows, args.dim)).astype(np.float32)
    query = rng.standard_normal(args.dim).astype(np.float32)
    a = rng.integers(0, 50, size=args.words).astype(np.int64)
    b = rng.integers(0, 50, size=args.words).astype(np.int64)

    backends = _backend.available_backends()
    print(f"cosine scan {args.rows}x{args.dim}, edit distance {args.words}x{args.words} words")
    print(f"{'backend':<8} {'cosine (ms)':>12} {'edit (ms)':>12}")
    results = {}
    for name, mod in sorted(backends.items()):
        cos = bench(lambda: mod.cosine_distances(matrix, query), args.repeat)
        edit = bench(lambda: mod.word_edit_distance(a, b), args.repeat)
        results[name] = (cos, edit)
        print(f"{name:<8} {cos * 1e3:>12.2f} {edit * 1e3:>12.2f}")

    if len(results) == 2:
        outs = [m.cosine_distances(matrix, query) for m in backends.values()]
        same = outs[0].tobytes() == outs[1].tobytes()
        py, cy = results["python"], results["cython"]
        print(f"speedup  {py[0] / cy[0]:>11.1f}x {py[1] / cy[1]:>11.1f}x  (bit-identical: {same})")


if __name__ == "__main__":
    main()
