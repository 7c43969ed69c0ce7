"""Compare the compiled tree kernels against the numpy fallback.

Trains the same forest with each available backend on a random sparse
matrix shaped like bag-of-words features, checks that the predictions are
bitwise identical and prints wall times.

    python3 benchmarks/bench_kernels.py --rows 2000 --cols 1000 --trees 20
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

from perfcast.classifiers import _backend, forest_predict, train_random_forest
from perfcast.classifiers.tree import SparseData


def make_data(rows: int, cols: int, density: float, seed: int):
    rng = np.random.default_rng(seed)
    X = sp.random(rows, cols, density=density, format="csr", random_state=rng,
                  data_rvs=lambda k: rng.gamma(2.0, 1.0, k))
    signal = np.asarray(X[:, :5].sum(axis=1)).ravel()
    y = signal + rng.normal(0, 0.5, rows) > np.quantile(signal, 0.97)
    return X, y


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--cols", type=int, default=1000)
    ap.add_argument("--density", type=float, default=0.01)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    X, y = make_data(args.rows, args.cols, args.density, args.seed)
    data = SparseData(X)
    print(f"{args.rows} rows x {args.cols} cols, {X.nnz} nonzeros, {int(y.sum())} positives, "
          f"{args.trees} trees")

    times, preds = {}, {}
    for name in _backend.available():
        fit_t, model = best_of(lambda: train_random_forest(X, y, args.trees, seed=args.seed, backend=name),
                               args.repeat)
        pred_t, p = best_of(lambda: forest_predict(model, data, backend=name), args.repeat)
        times[name], preds[name] = (fit_t, pred_t), p
        print(f"{name:>9}: fit {fit_t:8.3f} s   predict {pred_t:8.4f} s")

    if "compiled" in times and "python" in times:
        same = np.array_equal(preds["compiled"], preds["python"])
        print(f"speedup: fit {times['python'][0] / times['compiled'][0]:.1f}x, "
              f"predict {times['python'][1] / times['compiled'][1]:.1f}x; "
              f"predictions identical: {same}")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
