"""Compare the compiled and pure-Python Gram assembly.

    python benchmarks/bench_backends.py --sizes 256,512,1024,2048 --dim 16
"""
import argparse
import json
import statistics
import time

import numpy as np

from qpmkit import _backend
from qpmkit import kernels as K


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="256,512,1024,2048")
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    specs = {
        "gaussian": K.gaussian(2.0 * args.dim),
        "laplacian": K.laplacian(float(args.dim) ** 0.5),
        "imq": K.imq(float(args.dim) ** 0.5, 1.5),
        "mixture": K.normalize_kernel(K.gmmn_mixture()),
    }
    rows = []
    rng = np.random.default_rng(0)
    for n in (int(s) for s in args.sizes.split(",")):
        X = rng.standard_normal((n, args.dim))
        for name, spec in specs.items():
            row = {"n": n, "kernel": name}
            for backend in _backend.AVAILABLE:
                row[backend] = median_time(lambda: _backend.gram_matrix(X, spec, backend), args.repeats)
            if "cython" in row:
                row["speedup"] = row["python"] / row["cython"]
                G1 = _backend.gram_matrix(X, spec, "cython")
                G2 = _backend.gram_matrix(X, spec, "python")
                row["max_abs_diff"] = float(np.max(np.abs(G1 - G2)))
            rows.append(row)
            print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(json.dumps({"dim": args.dim, "repeats": args.repeats, "available": _backend.AVAILABLE,
                      "rows": rows}, indent=2))


if __name__ == "__main__":
    main()
