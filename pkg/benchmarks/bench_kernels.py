"""Compiled vs pure-Python pair-counting kernels.

Times the self and cross histograms, close-pair listing, labelled pair
counting and a labelling-null cross profile
(99 simulations) on uniform patterns in a unit-km window, and checks that
both backends return identical counts.

    python benchmarks/bench_kernels.py [--sizes 200 1000 5000] [--repeat 3]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from geostat import _pykernels
from geostat.pointpattern import scale_grid

try:
    from geostat import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def profile_time(backend: str, n: int, repeat: int) -> float:
    """Cross profile with 99 labelling sims, timed in a fresh interpreter so
    the backend choice made at import applies."""
    code = (
        "import time, numpy as np\n"
        "from geostat.pointpattern import TagPointPattern, cross_d_profile, scale_grid\n"
        f"rng = np.random.default_rng(1); n = {n}\n"
        "a = TagPointPattern('a', rng.uniform(0, 1, (n, 2)), 1.0, 1.0)\n"
        "b = TagPointPattern('b', rng.uniform(0, 1, (n, 2)), 1.0, 1.0)\n"
        "best = 1e9\n"
        f"for _ in range({repeat}):\n"
        "    t0 = time.perf_counter(); cross_d_profile(a, b, scale_grid(0.01, 10), 99, 0)\n"
        "    best = min(best, time.perf_counter() - t0)\n"
        "print(best)\n"
    )
    env = dict(os.environ, GEOSTAT_PURE_PYTHON="1" if backend == "python" else "0")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(res.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 1000, 5000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the Python backend is available")
        return 1
    grid = scale_grid(0.01, 10)
    r2 = grid * grid
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'n':>7}{'cython s':>12}{'python s':>12}{'speedup':>10}  equal")
    for n in args.sizes:
        x, y = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        u, v = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        pa, pb, pd2 = _pykernels.close_pairs(np.r_[x, u], np.r_[y, v], r2[-1])
        pbins = np.searchsorted(r2, pd2).astype(np.int64)
        labels = (rng.permutation(2 * n) < n).astype(np.uint8)
        cases = [
            ("pair_hist_self", lambda m: m.pair_hist_self(x, y, r2)),
            ("pair_hist_cross", lambda m: m.pair_hist_cross(x, y, u, v, r2)),
            ("close_pairs", lambda m: m.close_pairs(x, y, r2[-1])),
            ("label_hist", lambda m: m.label_hist(pa, pb, pbins, labels, len(r2))),
        ]
        for name, fn in cases:
            tc, oc = best_of(lambda: fn(_ckernels), args.repeat)
            tp, op = best_of(lambda: fn(_pykernels), args.repeat)
            same = all(np.array_equal(a, b) for a, b in zip(oc, op)) if isinstance(oc, tuple) \
                else np.array_equal(oc, op)
            print(f"{name:<16}{n:>7}{tc:>12.5f}{tp:>12.5f}{tp / tc:>10.1f}  {same}")
        tc = profile_time("cython", n, args.repeat)
        tp = profile_time("python", n, args.repeat)
        print(f"{'cross profile':<16}{n:>7}{tc:>12.5f}{tp:>12.5f}{tp / tc:>10.1f}  -")
    return 0


if __name__ == "__main__":
    sys.exit(main())
