"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--d 20 50] [--repeat 200]
"""
import argparse
import timeit

import numpy as np

from coke import _pykernels

try:
    from coke import _ckernels
except ImportError:
    _ckernels = None


def problem(d, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(100, d)) @ rng.normal(size=(d, d))
    xc = x - x.mean(axis=0)
    perm = rng.permutation(d)
    adj = _pykernels.full_dag_from_perm(perm) & (rng.random((d, d)) < 0.5)
    return np.ascontiguousarray(xc.T @ xc), np.ascontiguousarray(adj), perm


def time_call(fn, repeat):
    return min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, nargs="+", default=[10, 20, 50])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    impls = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    if _ckernels is None:
        print("compiled extension not available; timing the fallback only")
    print(f"{'kernel':<20}{'d':>5}" + "".join(f"{name + ' us':>14}" for name, _ in impls) + ("   speedup" if len(impls) == 2 else ""))
    for d in args.d:
        cov, adj, perm = problem(d)
        cases = {
            "rss_from_gram": lambda m: m.rss_from_gram(cov, adj, 1e-6),
            "is_acyclic": lambda m: m.is_acyclic(adj),
            "full_dag_from_perm": lambda m: m.full_dag_from_perm(perm),
        }
        for name, call in cases.items():
            times = [time_call(lambda m=m: call(m), args.repeat) * 1e6 for _, m in impls]
            row = f"{name:<20}{d:>5}" + "".join(f"{t:>14.1f}" for t in times)
            if len(times) == 2:
                row += f"{times[0] / times[1]:>10.1f}x"
            print(row)


if __name__ == "__main__":
    main()
