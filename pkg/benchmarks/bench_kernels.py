"""Compare the compiled and NumPy element condensation kernels.

    python benchmarks/bench_kernels.py --p 0 1 2 --n 16 --repeat 5
"""
import argparse
import time

import numpy as np

from dpglab.dpg_core import Config, DofMap, element_batch
from dpglab.harness import quadrant_elements
from dpglab.kernels import _fallback
from dpglab.mesh import build_unit_square, refine

try:
    from dpglab.kernels import _condense
except ImportError:
    _condense = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--p", type=int, nargs="+", default=[0, 1, 2, 3])
    parser.add_argument("--n", type=int, default=16, help="unit square subdivisions per side")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    base = build_unit_square(args.n)
    mesh = refine(base, quadrant_elements(base))  # mixed t_K from hanging faces
    print(f"mesh: {mesh.n_elements} elements, {mesh.n_hanging_faces} hanging faces")
    print(f"{'p':>2} {'m':>4} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8} {'max diff':>10}")
    for p in args.p:
        cfg = Config(p)
        batch = element_batch(mesh, cfg, lambda x, y: np.ones_like(x), DofMap(mesh, cfg))
        G = np.ascontiguousarray(batch.G)
        F = np.ascontiguousarray(batch.F)
        B = np.concatenate([b.ravel() for b in batch.B])
        t = np.array([len(d) for d in batch.dofs], dtype=np.int64)
        tp = best_of(lambda: _fallback.condense(G, B, t, F), args.repeat)
        if _condense is None:
            print(f"{p:>2} {cfg.m:>4} {1e3 * tp:>12.2f} {'n/a':>12} {'':>8} {'':>10}")
            continue
        tc = best_of(lambda: _condense.condense(G, B, t, F), args.repeat)
        a1, _ = _fallback.condense(G, B, t, F)
        a2, _ = _condense.condense(G, B, t, F)
        diff = np.abs(a1 - a2).max() / np.abs(a1).max()
        print(f"{p:>2} {cfg.m:>4} {1e3 * tp:>12.2f} {1e3 * tc:>12.2f} {tp / tc:>8.2f} {diff:>10.1e}")


if __name__ == "__main__":
    main()
