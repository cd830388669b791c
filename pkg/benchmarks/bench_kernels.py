"""Benchmark the compiled kernels against the NumPy/SciPy fallback, and the
banded radius filter against whole-cloud filtering.

Run: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from woundpatch import USING_COMPILED
from woundpatch._kernels import _fallback

if USING_COMPILED:
    from woundpatch._kernels import _core
else:
    _core = None


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def fmt(seconds):
    return f"{seconds * 1000:8.2f} ms"


def bench_neighbor_counts():
    rng = np.random.default_rng(0)
    n = 100_000
    points = np.ascontiguousarray(rng.uniform(0, 1, size=(n, 3)))
    band = np.sort(rng.choice(n, size=n // 10, replace=False)).astype(np.int64)
    whole = np.arange(n, dtype=np.int64)
    radius = 0.01

    print(f"\nneighbor counts, {n} points, radius {radius}")
    rows = [("band 10%", band), ("whole cloud", whole)]
    for label, queries in rows:
        fallback_t = best_of(lambda: _fallback.count_within_radius(points, queries, radius), 3)
        line = f"  {label:<12} fallback {fmt(fallback_t)}"
        if _core is not None:
            compiled_t = best_of(lambda: _core.count_within_radius(points, queries, radius), 3)
            line += f"   compiled {fmt(compiled_t)}   speedup x{fallback_t / compiled_t:.1f}"
        print(line)

    if _core is not None:
        banded = best_of(lambda: _core.count_within_radius(points, band, radius), 3)
        full = best_of(lambda: _core.count_within_radius(points, whole, radius), 3)
        verdict = "OK" if banded < full else "UNEXPECTED"
        print(
            f"  banded vs whole-cloud (compiled): {fmt(banded)} vs {fmt(full)} "
            f"-> banded faster: {verdict}"
        )


def bench_point_in_polygon():
    rng = np.random.default_rng(1)
    ang = np.linspace(0, 2 * np.pi, 900, endpoint=False)
    poly = np.ascontiguousarray(
        np.column_stack([100 + 80 * np.cos(ang), 100 + 80 * np.sin(ang)])
    )
    pts = np.ascontiguousarray(rng.uniform(0, 200, size=(120_000, 2)))

    print(f"\npoint-in-polygon, {len(pts)} points vs {len(poly)}-gon")
    fallback_t = best_of(lambda: _fallback.points_in_polygon(pts, poly), 3)
    line = f"  fallback {fmt(fallback_t)}"
    if _core is not None:
        compiled_t = best_of(lambda: _core.points_in_polygon(pts, poly), 3)
        line += f"   compiled {fmt(compiled_t)}   speedup x{fallback_t / compiled_t:.1f}"
    print(line)


if __name__ == "__main__":
    print(f"compiled extension available: {USING_COMPILED}")
    bench_neighbor_counts()
    bench_point_in_polygon()
