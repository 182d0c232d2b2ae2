"""Compare compiled and numpy tree kernels on a boosted-tree fit and on prediction.

    python3 benchmarks/bench_kernels.py --n 16000 --p 31 --trees 100 --depth 3
"""

import argparse
import time

import numpy as np

from hurdle_uplift.learners import _backend
from hurdle_uplift.learners.gbt import BINARY, GbtParams, fit_gbt, predict


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=16000)
    ap.add_argument("--p", type=int, default=31)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    X = np.round(rng.normal(size=(args.n, args.p)), 3)
    logit = X[:, 0] - 0.5 * X[:, 1] * X[:, 2] - 2.0
    y = (rng.random(args.n) < 1.0 / (1.0 + np.exp(-logit))).astype(float)
    params = GbtParams(args.trees, args.depth, 0.1, 10.0)

    backends = ["python"]
    if _backend.compiled_kernels is not None:
        backends.insert(0, "compiled")
    results = {}
    for b in backends:
        t_fit, model = _time(lambda: fit_gbt(X, y, task=BINARY, params=params, backend=b),
                             args.repeat)
        t_pred, pred = _time(lambda: predict(model, X, backend=b), args.repeat)
        results[b] = (t_fit, t_pred, pred)
        print(f"{b:>9}: fit {t_fit:8.3f} s   predict {t_pred * 1e3:8.2f} ms")
    if len(results) == 2:
        (fc, pc, yc), (fp, pp, yp) = results["compiled"], results["python"]
        print(f"  speedup: fit x{fp / fc:.1f}   predict x{pp / pc:.1f}   "
              f"max |diff| {np.max(np.abs(yc - yp)):.3g}")
    else:
        print("compiled kernels not built; only the fallback was timed")


if __name__ == "__main__":
    main()
