"""Time every hot kernel in its numba and pure-numpy form.

    python benchmarks/bench_kernels.py [--repeat 5] [--size medium]

Numba timings exclude the first (compiling) call.
"""
import argparse
import time

import numpy as np

from centerdepth import _accel, kernels

SIZES = {"small": 0.25, "medium": 1.0, "large": 4.0}


def cases(scale, rng):
    n = int(1024 * scale)
    unary = rng.uniform(1, 200, n)
    weights = rng.uniform(1e-3, 1, n)
    feats = rng.uniform(0, 1, (n, 8))
    side = int(128 * scale ** 0.5)
    # a rendered heatmap like the pipeline's: a dozen peaks over faint noise
    hm = rng.uniform(0, 0.05, (side, side))
    for _ in range(12):
        kernels.splat_gaussian_numpy(hm, rng.uniform(0, side - 1), rng.uniform(0, side - 1), rng.uniform(1, 4))
    occ = rng.random((int(64 * scale ** 0.5), int(64 * scale ** 0.5))) < 0.25
    occ[0, 0] = occ[-1, -1] = False
    xs, zs, radii = rng.uniform(-20, 20, 12), rng.uniform(0, 60, 12), rng.uniform(0.5, 3, 12)
    return {
        "feature_weights": lambda f: f(feats, feats[0], 0.2),
        "star_solve": lambda f: f(unary, weights, n // 2, 1.0),
        "coordinate_descent": lambda f: f(unary, weights, n // 2, 1.0, 10000, 1e-18),
        "splat_gaussian": lambda f: f(np.zeros_like(hm), hm.shape[1] / 2, hm.shape[0] / 2, 4.0),
        "peak_mask": lambda f: f(hm, 0.5, 1),
        "disk_occupancy": lambda f: f(xs, zs, radii, -20.0, 0.0, 0.5, 120, 80),
        "astar": lambda f: f(occ, 0, 0, occ.shape[0] - 1, occ.shape[1] - 1),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", choices=sorted(SIZES), default="medium")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, call in cases(SIZES[args.size], rng).items():
        f_np = getattr(kernels, f"{name}_numpy")
        f_nb = getattr(kernels, f"{name}_numba")
        call(f_nb)  # compile
        t_np = best_of(lambda: call(f_np), args.repeat)
        t_nb = best_of(lambda: call(f_nb), args.repeat)
        print(f"{name:<20}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
