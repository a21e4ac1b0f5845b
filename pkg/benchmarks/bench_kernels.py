"""Timings of the hot kernels: numba-compiled vs interpreted fallback.

Run:  python benchmarks/bench_kernels.py [--steps N]
The interpreted path is the same code object (kernel.py_func), so the
comparison is apples to apples; RANGELAB_NO_NUMBA=1 selects it package-wide.
"""

import argparse
import time

import numpy as np

from rangelab import kernels
from rangelab.samplers import ModelParams, stream


def timeit(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2_000_000)
    args = ap.parse_args()

    params = ModelParams(0.02, np.array([0.5, 0.5]))
    rng = stream(7)
    us = rng.random(2 * args.steps)
    p_tab = params.up_prob_table()
    cum_a = params.cum_weights()

    if not kernels.NUMBA_ENABLED:
        print("numba disabled/missing: both columns run the interpreted path")

    rows = []

    def bench(name, kernel, *inputs):
        jit_fn = kernel
        py_fn = kernels.py_func(kernel)
        jit_fn(*[np.copy(x) if isinstance(x, np.ndarray) else x for x in inputs])  # warm/compile
        t_jit, _ = timeit(jit_fn, *inputs)
        t_py, _ = timeit(py_fn, *inputs, repeat=1)
        rows.append((name, t_jit, t_py))

    buf = np.zeros(args.steps, dtype=np.int64)
    bench("walk_fill", kernels.walk_fill, us, p_tab, params.u, cum_a, 0, 0,
          args.steps, buf)

    n, _, _ = kernels.walk_fill(us, p_tab, params.u, cum_a, 0, 0, args.steps, buf)
    moves = buf[:n]
    n_up = int(np.count_nonzero(moves))
    bench("decode_moves", kernels.decode_moves, moves, n_up)

    counts, _, _, _ = kernels.decode_moves(moves, n_up)
    bench("heights_from_counts", kernels.heights_from_counts, counts)
    bench("parents_from_counts", kernels.parents_from_counts, counts)
    v = np.concatenate(([0], np.cumsum(counts - 1)))
    bench("height_from_lukasiewicz", kernels.height_from_lukasiewicz_kernel, v)
    h = kernels.heights_from_counts(counts)
    bench("contour_from_height", kernels.contour_from_height_kernel, h)
    bench("contour_direct", kernels.contour_direct_kernel, counts)
    bench("walk_trie", kernels.walk_trie, moves, n_up, params.b)
    child, _, first_step, _ = kernels.walk_trie(moves, n_up, params.b)
    bench("trie_to_counts", kernels.trie_to_counts, child, first_step, n)

    print(f"{'kernel':<26}{'numba [ms]':>12}{'numpy/py [ms]':>15}{'speedup':>9}")
    for name, tj, tp in rows:
        print(f"{name:<26}{1e3 * tj:>12.2f}{1e3 * tp:>15.2f}{tp / tj:>9.1f}x")


if __name__ == "__main__":
    main()
