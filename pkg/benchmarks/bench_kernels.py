"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 4000] [--repeat 5]

Both backends get identical inputs; results are checked for agreement
before timings are printed.
"""
import argparse
import time

import numpy as np

from geoleak import kernels


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    # a few dense places around Tel Aviv plus sparse background, one sample per minute
    centers = rng.uniform([32.0, 34.75], [32.15, 34.9], size=(8, 2))
    which = rng.integers(0, len(centers), n)
    pts = centers[which] + rng.normal(0, 0.0008, size=(n, 2))
    bg = rng.random(n) < 0.2
    pts[bg] = rng.uniform([31.9, 34.7], [32.2, 35.0], size=(bg.sum(), 2))
    ts = np.sort(rng.integers(0, n * 60_000, n)).astype(np.int64)
    lat = np.ascontiguousarray(pts[:, 0])
    lon = np.ascontiguousarray(pts[:, 1])
    return lat, lon, ts


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-6)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4000, help="points per input")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if kernels.compiled is None:
        print("compiled extension not built; only the fallback is available")
        return 1

    lat, lon, ts = _inputs(args.n)
    olat, olon, ots = _inputs(args.n // 4, seed=1)
    indptr, indices = kernels.fallback.neighbor_lists(lat, lon, ts, 200.0, -1)

    cases = {
        "haversine_many": lambda m: m.haversine_many(32.08, 34.78, lat, lon),
        "neighbor_lists": lambda m: m.neighbor_lists(lat, lon, ts, 200.0, -1),
        "neighbor_lists (time)": lambda m: m.neighbor_lists(lat, lon, ts, 200.0, 30 * 60_000),
        "dbscan_expand": lambda m: m.dbscan_expand(indptr, indices, 5),
        "nearest_in_window": lambda m: m.nearest_in_window(ots, olat, olon, ts, lat, lon, 600_000),
    }

    print(f"n={args.n}, best of {args.repeat}")
    print(f"{'kernel':<24}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, call in cases.items():
        tp, rp = _time(lambda: call(kernels.fallback), args.repeat)
        tc, rc = _time(lambda: call(kernels.compiled), args.repeat)
        if not _same(rp, rc):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<24}{tp * 1e3:>14.2f}{tc * 1e3:>14.2f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
