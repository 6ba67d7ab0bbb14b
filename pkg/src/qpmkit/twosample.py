"""Permutation two-sample test with MMD or QPM as the statistic."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptySupport
from .gram_linalg import build_gram, difference_spectrum, factor_gram
from .kernels import KernelSpec, normalize_kernel
from .measures import as_pointset
from .metrics import PIVOTED_DEFAULT, gram_kernel


class PooledStatistic:
    """A two-sample statistic evaluated on a fixed pooled sample.

    ``bind`` sees the distinct pooled rows once and returns a function of
    the signed coefficient vector over those rows (``+1/n`` for rows drawn
    into the first sample, ``-1/m`` for the second, summed over repeats).
    """

    name = "custom"

    def bind(self, rows: np.ndarray) -> Callable[[np.ndarray], float]:
        raise NotImplementedError


class MMDStatistic(PooledStatistic):
    name = "mmd"

    def __init__(self, spec: KernelSpec, backend: str | None = None):
        self.spec = normalize_kernel(spec)
        self.backend = backend

    def bind(self, rows):
        G = build_gram(rows, self.spec, backend=self.backend)

        def value(c):
            return math.sqrt(max(0.0, float(c @ (G @ c))))

        return value


class QPMStatistic(PooledStatistic):
    name = "qpm"

    def __init__(self, spec: KernelSpec, use_sqrt_kernel: bool = True, epsilon: float = 0.0,
                 max_retries: int = 3, backend: str | None = None):
        self.kernel = gram_kernel(spec, use_sqrt_kernel)
        self.epsilon = epsilon
        self.max_retries = max_retries
        self.backend = backend
        self.epsilon_used = None

    def bind(self, rows):
        fact = factor_gram(build_gram(rows, self.kernel, backend=self.backend),
                           self.epsilon, self.max_retries, pivoted=PIVOTED_DEFAULT)
        self.epsilon_used = fact.epsilon_used

        def value(c):
            return 0.5 * difference_spectrum(fact, c).trace_norm

        return value


def make_statistic(statistic, spec: KernelSpec, **kwargs) -> PooledStatistic:
    if isinstance(statistic, PooledStatistic):
        return statistic
    if statistic == "mmd":
        return MMDStatistic(spec, backend=kwargs.get("backend"))
    if statistic == "qpm":
        return QPMStatistic(spec, **kwargs)
    raise ValueError(f"unknown statistic {statistic!r}")


@dataclass(frozen=True, eq=False)
class PermutationTestResult:
    baseline: float
    permutation_values: np.ndarray
    exceed_count: int
    p_value: float
    statistic: str
    seed: int
    n_perm: int
    epsilon_used: float | None = None

    def histogram(self, bins: int = 10) -> dict:
        counts, edges = np.histogram(self.permutation_values, bins=bins)
        v = self.permutation_values
        return {
            "min": float(v.min()),
            "max": float(v.max()),
            "mean": float(v.mean()),
            "median": float(np.median(v)),
            "counts": counts.tolist(),
            "edges": edges.tolist(),
        }

    def to_dict(self, bins: int = 10) -> dict:
        return {
            "statistic": self.statistic,
            "baseline": self.baseline,
            "exceed_count": self.exceed_count,
            "n_perm": self.n_perm,
            "p_value": self.p_value,
            "seed": self.seed,
            "epsilon_used": self.epsilon_used,
            "permutation_summary": self.histogram(bins),
        }


def p_value(exceed_count: int, n_perm: int) -> float:
    """Continuity-corrected permutation p-value (r + 1) / (N + 1)."""
    if not 0 <= exceed_count <= n_perm:
        raise ValueError("exceed_count must lie in [0, n_perm]")
    return (exceed_count + 1) / (n_perm + 1)


def permutation_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for permutation ``index`` of a run seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def permutation_test(
    a,
    b,
    spec: KernelSpec,
    statistic="mmd",
    n_perm: int = 1000,
    seed: int = 0,
    *,
    n_jobs: int = 1,
    **statistic_kwargs,
) -> PermutationTestResult:
    """Permutation test of "a and b come from the same distribution".

    The baseline compares the uniform measures on ``a`` and ``b``. Each
    permutation reshuffles the pooled rows with its own generator derived
    from ``(seed, index)`` and splits them back into sizes ``|a|`` and
    ``|b|``. Permutation values at or above the baseline count as
    exceedances.
    """
    A, B = as_pointset(a).data, as_pointset(b).data
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"samples have dimensions {A.shape[1]} and {B.shape[1]}")
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    if seed < 0:
        raise ValueError("seed must be >= 0")
    n, m = A.shape[0], B.shape[0]
    if n == 0 or m == 0:
        raise EmptySupport("both samples need at least one row")

    pooled = np.vstack([A, B])
    rows, labels = np.unique(pooled, axis=0, return_inverse=True)
    labels = labels.ravel()
    stat = make_statistic(statistic, spec, **statistic_kwargs)
    evaluate = stat.bind(rows)
    n_rows = rows.shape[0]

    def coefficients(first):
        in_a = np.zeros(n + m, dtype=bool)
        in_a[first] = True
        return (np.bincount(labels[in_a], minlength=n_rows) / n
                - np.bincount(labels[~in_a], minlength=n_rows) / m)

    baseline = evaluate(coefficients(np.arange(n)))

    def one(i):
        perm = permutation_stream(seed, i).permutation(n + m)
        try:
            return evaluate(coefficients(perm[:n]))
        except Exception as exc:
            raise type(exc)(f"permutation {i} (seed {seed}) failed: {exc}") from exc

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            values = np.array(list(pool.map(one, range(n_perm))))
    else:
        values = np.array([one(i) for i in range(n_perm)])
    r = int(np.count_nonzero(values >= baseline))
    return PermutationTestResult(
        baseline, values, r, p_value(r, n_perm), stat.name, seed, n_perm,
        getattr(stat, "epsilon_used", None),
    )


@dataclass(frozen=True, eq=False)
class RepeatedTestSummary:
    mean_p: float
    rejection_rate: float
    alpha: float
    results: list[PermutationTestResult] = field(repr=False)

    @property
    def p_values(self) -> np.ndarray:
        return np.array([r.p_value for r in self.results])


def _batch(source, i):
    return source(i) if callable(source) else source[i]


def repeated_test(
    a_source: Callable[[int], np.ndarray] | Sequence,
    b_source: Callable[[int], np.ndarray] | Sequence,
    repeats: int,
    spec: KernelSpec,
    statistic="mmd",
    n_perm: int = 1000,
    seed: int = 0,
    alpha: float = 0.05,
    **kwargs,
) -> RepeatedTestSummary:
    """Run ``repeats`` permutation tests on fresh batch pairs.

    Sources are either callables ``i -> batch`` or indexable sequences of
    batches. Reports the mean p-value and, because averaging p-values is not
    itself a valid test, the fraction of batches rejected at ``alpha``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    results = []
    for i in range(repeats):
        sub_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        results.append(permutation_test(_batch(a_source, i), _batch(b_source, i), spec,
                                        statistic, n_perm, sub_seed, **kwargs))
    p = np.array([r.p_value for r in results])
    return RepeatedTestSummary(float(p.mean()), float(np.mean(p <= alpha)), alpha, results)
