"""Benchmark the numba kernels against the pure-numpy fallback.

The two paths produce identical counts; this script times them on the hot
workloads (adjacency construction + curve accumulation, cube occupancy).
Run directly:

    python benchmarks/bench_kernels.py [--points 4000] [--k 3] [--repeats 5]

Setting RGGLAB_DISABLE_NUMBA=1 would force every caller onto the fallback;
here both implementations are called explicitly so that a single process can
compare them.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rgglab import kernels
from rgglab.atlas import build_atlas, pair_bit_index
from rgglab.counting import CountRequest, count_decomposed, make_cloud


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_curves(n_points: int, k: int, repeats: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    # annulus-like cloud: radii around 40, mild clustering so candidates exist
    r = 40.0 + rng.exponential(4.0, n_points)
    th = rng.uniform(0, 2 * np.pi, n_points)
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
    norms = np.linalg.norm(pts, axis=1)
    t_grid = np.array([0.5, 0.75, 1.0, 1.25, 1.5])
    atlas = build_atlas(k)
    shape = atlas.classes[0]
    cid = atlas.shape_index(shape)
    pb = pair_bit_index(k)

    indptr, indices = kernels.build_adjacency(pts, float(t_grid[-1]))
    print(f"cloud: {n_points} points, {indices.size // 2} edges at t_max, k={k}")

    if kernels.NUMBA_ENABLED:
        args_nb = (pts, norms, indptr, indices, t_grid, k, 0.0, np.inf,
                   atlas.class_table().astype(np.int16), np.int64(cid),
                   np.int64(shape.edge_count), pb)
        kernels._curves_numba(*args_nb)  # compile outside the timer
        t_nb, out_nb = _time(lambda: kernels._curves_numba(*args_nb), repeats)
    else:
        t_nb, out_nb = float("nan"), None
        print("numba disabled or unavailable; timing fallback only")

    bit_weights = (np.int64(1) << pb[np.triu_indices(k, 1)]).astype(np.int64)
    t_np, out_np = _time(lambda: kernels._curves_numpy(
        pts, norms, indptr, indices, t_grid, k, 0.0, np.inf,
        atlas.class_table(), atlas.edge_count_table(), cid,
        shape.edge_count, bit_weights), repeats)

    if out_nb is not None:
        assert np.array_equal(out_nb, out_np), "kernel paths disagree"
        print(f"curves:    numba {t_nb*1e3:8.2f} ms | numpy {t_np*1e3:8.2f} ms "
              f"| speedup x{t_np / t_nb:.1f}")
    else:
        print(f"curves:    numpy {t_np*1e3:8.2f} ms")

    def adjacency_numba():
        return kernels.build_adjacency(pts, float(t_grid[-1]))

    def adjacency_numpy():
        cells = kernels._cell_coords(pts, float(t_grid[-1]))
        return kernels._adjacency_numpy(pts, cells, float(t_grid[-1]))

    if kernels.NUMBA_ENABLED:
        t_anb, _ = _time(adjacency_numba, repeats)
        t_anp, _ = _time(adjacency_numpy, repeats)
        print(f"adjacency: numba {t_anb*1e3:8.2f} ms | numpy {t_anp*1e3:8.2f} ms "
              f"| speedup x{t_anp / t_anb:.1f}")


def bench_occupancy(repeats: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    pts = rng.normal(scale=3.0, size=(1_000_000, 2))
    g = 1.0 / (2.0 * np.sqrt(2))
    base = np.array([-40, -40])
    dims = np.array([80, 80])
    if kernels.NUMBA_ENABLED:
        cells = kernels._cell_coords(pts, g)
        kernels._occupancy_numba(cells, dims, base)
        t_nb, _ = _time(lambda: kernels._occupancy_numba(
            kernels._cell_coords(pts, g), dims, base), repeats)
    else:
        t_nb = float("nan")
    rel = kernels._cell_coords(pts, g) - base

    def occupancy_numpy():
        inside = np.all((rel >= 0) & (rel < dims), axis=1)
        occ = np.zeros(int(np.prod(dims)), dtype=bool)
        occ[np.ravel_multi_index(rel[inside].T, dims)] = True
        return occ

    t_np, _ = _time(occupancy_numpy, repeats)
    if kernels.NUMBA_ENABLED:
        print(f"occupancy: numba {t_nb*1e3:8.2f} ms | numpy {t_np*1e3:8.2f} ms "
              f"(1e6 points)")
    else:
        print(f"occupancy: numpy {t_np*1e3:8.2f} ms (1e6 points)")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=4000)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"numba enabled: {kernels.NUMBA_ENABLED}")
    bench_curves(args.points, args.k, args.repeats, args.seed)
    bench_occupancy(args.repeats, args.seed)


if __name__ == "__main__":
    main()
