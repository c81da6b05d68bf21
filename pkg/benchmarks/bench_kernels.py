"""Timing comparison of the compiled kernels against the numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py            # both backends, one table
    python benchmarks/bench_kernels.py --backend numpy

The backend is fixed at import time by the ``NOWCASTKIT_NUMBA`` environment
variable, so the two-backend run re-executes this script in subprocesses.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def _tree_workload():
    from nowcastkit import trees

    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 8))
    y = X[:, 0] - 0.5 * X[:, 3] + np.sin(X[:, 5]) + rng.normal(scale=0.4, size=400)
    model = trees.fit_rf(X, y, n_trees=50, seed=1)
    return float(np.sum(model.predict(X[:100])))


def _lasso_workload():
    from nowcastkit import linear

    rng = np.random.default_rng(1)
    X = rng.normal(size=(500, 40))
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    y = X[:, :5] @ rng.normal(size=5) + rng.normal(size=500)
    lam_top = linear.lambda_max(X, y)
    total = 0.0
    warm = None
    for lam in np.geomspace(lam_top, lam_top / 100.0, 30):
        fit = linear.fit_lasso(X, y, float(lam), warm_start=warm)
        warm = fit.coef
        total += float(np.sum(fit.coef))
    return total


def _kalman_workload():
    from nowcastkit import dfm

    rng = np.random.default_rng(2)
    s, n, T = 8, 6, 400
    A = rng.normal(size=(s, s))
    A *= 0.7 / np.max(np.abs(np.linalg.eigvals(A)))
    L = rng.normal(size=(s, s))
    Q = L @ L.T + 0.1 * np.eye(s)
    H = rng.normal(size=(n, s))
    R = 0.3 * np.eye(n)
    ssm = dfm.StateSpace(A, Q, H, R, np.zeros(s), np.eye(s))
    Y = rng.normal(size=(T, n))
    Y[rng.random(size=(T, n)) < 0.2] = np.nan
    total = 0.0
    for _ in range(20):
        total += dfm.kalman_smoother(ssm, Y).loglik
    return total


WORKLOADS = {
    "random forest (50 trees, 400x8)": _tree_workload,
    "lasso path (30 lambdas, 500x40)": _lasso_workload,
    "kalman smoother (20x, T=400, s=8)": _kalman_workload,
}


def run_backend() -> None:
    from nowcastkit._kernels import USING_NUMBA

    print(f"backend={'numba' if USING_NUMBA else 'numpy'}")
    for name, fn in WORKLOADS.items():
        fn()  # warm-up (jit compilation, caches)
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        print(f"time\t{name}\t{min(times):.4f}")


def run_both() -> int:
    results: dict[str, dict[str, float]] = {}
    for backend, flag in (("numba", "1"), ("numpy", "0")):
        env = dict(os.environ, NOWCASTKIT_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--backend", "self"],
            capture_output=True,
            text=True,
            env=env,
        )
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            return proc.returncode
        label = None
        for line in proc.stdout.splitlines():
            if line.startswith("backend="):
                label = line.split("=", 1)[1]
                results[label] = {}
            elif line.startswith("time\t"):
                _, name, secs = line.split("\t")
                results[label][name] = float(secs)
    width = max(len(n) for n in WORKLOADS)
    print(f"{'workload':<{width}}  {'numba':>9}  {'numpy':>9}  {'speedup':>8}")
    for name in WORKLOADS:
        tn = results["numba"][name]
        tp = results["numpy"][name]
        print(f"{name:<{width}}  {tn:>8.4f}s  {tp:>8.4f}s  {tp / tn:>7.1f}x")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--backend", choices=("both", "self", "numba", "numpy"), default="both")
    args = parser.parse_args(argv)
    if args.backend == "self":
        run_backend()
        return 0
    if args.backend in ("numba", "numpy"):
        os.environ["NOWCASTKIT_NUMBA"] = "1" if args.backend == "numba" else "0"
        run_backend()
        return 0
    return run_both()


if __name__ == "__main__":
    sys.exit(main())
