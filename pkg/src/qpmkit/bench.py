"""Wall-clock scaling of MMD and QPM in the joined support size."""
from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels as K
from . import metrics as M

MAX_SIZE = 8192
BENCH_DIM = 16
BENCH_SEED = 0
STATISTICS = ("mmd", "qpm")
CSV_FIELDS = ("n", "statistic", "wall_time_s", "repeats", "dim")


@dataclass(frozen=True)
class BenchRecord:
    n: int
    statistic: str
    wall_time_s: float
    repeats: int
    dim: int

    def __post_init__(self):
        if not self.wall_time_s > 0:
            raise ValueError("wall_time_s must be > 0")


@dataclass(frozen=True, eq=False)
class BenchSweep:
    records: list[BenchRecord]
    exponents: dict[str, float]
    kernel: dict
    dim: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "fitted_exponents": self.exponents,
            "kernel": self.kernel,
            "dim": self.dim,
            "seed": self.seed,
        }


def check_sizes(sizes) -> list[int]:
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("need at least one size")
    if any(s < 2 for s in sizes):
        raise ValueError("sizes must be >= 2")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly ascending")
    if sizes[-1] > MAX_SIZE:
        raise ValueError(f"sizes must be <= {MAX_SIZE}")
    return sizes


def blobs(n: int, dim: int = BENCH_DIM, seed: int = BENCH_SEED) -> tuple[np.ndarray, np.ndarray]:
    """Two standard-normal samples of sizes n//2 and n - n//2, the second shifted by one unit."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
    a = rng.standard_normal((n // 2, dim))
    b = rng.standard_normal((n - n // 2, dim))
    b[:, 0] += 1.0
    return a, b


def bench_kernel(dim: int = BENCH_DIM) -> K.KernelSpec:
    # sigma^2 = dim keeps typical kernel values away from 0 and 1 for unit blobs
    return K.gaussian_sigma(math.sqrt(dim))


def time_call(fn, repeats: int) -> float:
    """Median wall time of ``repeats`` calls."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def fitted_exponent(ns, times) -> float | None:
    """Least-squares log-log slope over the top half of the sizes (at least two)."""
    ns, times = list(ns), list(times)
    if len(ns) < 2:
        return None
    k = max(2, math.ceil(len(ns) / 2))
    x = np.log(np.asarray(ns[-k:], dtype=float))
    y = np.log(np.asarray(times[-k:], dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def run_bench(sizes, repeats: int = 5, dim: int = BENCH_DIM, seed: int = BENCH_SEED,
              statistics_=STATISTICS, backend: str | None = None, log=None) -> BenchSweep:
    sizes = check_sizes(sizes)
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    spec = bench_kernel(dim)
    calls = {
        "mmd": lambda a, b: M.mmd(a, b, spec, backend=backend),
        "qpm": lambda a, b: M.qpm(a, b, spec, backend=backend),
    }
    records = []
    for n in sizes:
        a, b = blobs(n, dim, seed)
        for name in statistics_:
            t = time_call(lambda: calls[name](a, b), repeats)
            records.append(BenchRecord(n, name, t, repeats, dim))
            if log is not None:
                log(f"bench n={n} {name} median {t:.4g}s")
    exponents = {}
    for name in statistics_:
        rows = [r for r in records if r.statistic == name]
        slope = fitted_exponent([r.n for r in rows], [r.wall_time_s for r in rows])
        if slope is not None:
            exponents[name] = slope
    return BenchSweep(records, exponents, spec.describe(), dim, seed)


def write_csv(path, records: list[BenchRecord]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(r).items()})


def read_csv(path) -> list[BenchRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            BenchRecord(int(row["n"]), row["statistic"], float(row["wall_time_s"]),
                        int(row["repeats"]), int(row["dim"]))
            for row in csv.DictReader(fh)
        ]
