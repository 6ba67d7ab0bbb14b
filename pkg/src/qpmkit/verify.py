"""Self-check suites: numeric evidence that the fast path is right.

Each ``check_*`` function runs one family of checks and returns
:class:`Check` records; sizes default to the full acceptance settings and
can be shrunk for quick runs.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fock_oracle as fock
from . import kernels as K
from . import metrics as M
from .gram_linalg import build_gram, factor_gram, general_spectrum, hermitian_spectrum
from .measures import make_measure, signed_difference
from .twosample import p_value, permutation_test

SUITES = ("fock", "escape", "properties", "all")


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    relation: str = "<="
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {self.value:.6g} {self.relation} {self.tolerance:.6g} ({self.seconds:.2f}s)"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["value"] = float(d["value"])
        return d


def _le(name, value, tol, **details) -> Check:
    return Check(name, float(value), tol, bool(value <= tol), "<=", details)


def _ge(name, value, tol, **details) -> Check:
    return Check(name, float(value), tol, bool(value >= tol), ">=", details)


class _timed:
    def __init__(self, checks):
        self.checks = checks

    def __enter__(self):
        self.t0 = time.perf_counter()
        self.n0 = len(self.checks)
        return self

    def __exit__(self, *exc):
        dt = time.perf_counter() - self.t0
        for c in self.checks[self.n0:]:
            c.seconds = dt
        return False


def random_sqrt_family_kernel(rng: np.random.Generator, family: str, dim: int) -> K.KernelSpec:
    scale = float(rng.uniform(0.5, 2.0)) * dim
    if family == K.GAUSSIAN:
        return K.gaussian(scale)
    if family == K.LAPLACIAN:
        return K.laplacian(math.sqrt(scale))
    return K.imq(math.sqrt(scale), float(rng.uniform(0.5, 4.0)))


SQRT_FAMILIES = (K.GAUSSIAN, K.LAPLACIAN, K.IMQ)


# -- point masses -------------------------------------------------------------

def check_point_mass_closed_forms(n_pairs: int = 100, tol: float = 1e-12, seed: int = 1) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = {"qpm": 0.0, "mmd_base": 0.0, "isometric": 0.0}
    for _ in range(n_pairs):
        dim = int(rng.integers(1, 4))
        x, y = rng.normal(size=dim), rng.normal(size=dim)
        for fam in SQRT_FAMILIES:
            spec = random_sqrt_family_kernel(rng, fam, dim)
            k = K.eval_kernel(spec, x, y)
            p, q = make_measure(x[None, :]), make_measure(y[None, :])
            worst["qpm"] = max(worst["qpm"], abs(M.qpm(p, q, spec).value - math.sqrt(1 - k)))
            worst["mmd_base"] = max(worst["mmd_base"], abs(M.mmd(p, q, spec).value - math.sqrt(2 - 2 * k)))
            iso = M.qpm(p, q, spec, isometric_scaling=True).value
            worst["isometric"] = max(worst["isometric"], abs(iso - M.mmd_squared_kernel(p, q, spec).value))
    return [
        _le("point_mass.qpm_vs_sqrt(1-K)", worst["qpm"], tol),
        _le("point_mass.mmd_vs_sqrt(2-2k)", worst["mmd_base"], tol),
        _le("point_mass.sqrt2_qpm_vs_mmd_squared_kernel", worst["isometric"], tol),
    ]


# -- Hermitian vs general eigensolver ----------------------------------------

def random_instance(rng: np.random.Generator, max_total: int = 64, max_dim: int = 4):
    dim = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(1, max_total // 2 + 1))
    m = int(rng.integers(1, max_total // 2 + 1))
    p = make_measure(rng.normal(size=(n, dim)), rng.dirichlet(np.ones(n)))
    q = make_measure(rng.normal(size=(m, dim)) + rng.normal(scale=0.5, size=dim), rng.dirichlet(np.ones(m)))
    return p, q, dim


def check_spectral_equivalence(n_instances: int = 200, max_total: int = 64, tol: float = 1e-8,
                               seed: int = 2) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    eps_used = []
    for _ in range(n_instances):
        p, q, dim = random_instance(rng, max_total)
        spec = random_sqrt_family_kernel(rng, SQRT_FAMILIES[rng.integers(3)], dim)
        kern = K.sqrt_kernel(spec).sqrt_spec
        s = signed_difference(p, q)
        G = build_gram(s.points, kern)
        fact = factor_gram(G)
        eps_used.append(fact.epsilon_used)
        herm, _ = hermitian_spectrum(fact.factor, s.coefficients)
        Greg = G + fact.epsilon_used * np.eye(G.shape[0])
        gen, _ = general_spectrum(Greg, s.coefficients)
        worst = max(worst, float(np.max(np.abs(herm - gen))))
    return [_le("spectrum.hermitian_vs_general", worst, tol, instances=n_instances,
                max_epsilon_used=max(eps_used))]


# -- Fock oracle ----------------------------------------------------------------

def oracle_instance(rng: np.random.Generator, max_total: int = 12, max_modulus: float = 2.0):
    """Random instance whose rescaled, recentred labels stay within ``max_modulus``."""
    dim = int(rng.integers(1, 3))
    length_scale = float(rng.uniform(0.5, 2.0))
    n = int(rng.integers(1, max_total // 2 + 1))
    m = int(rng.integers(1, max_total // 2 + 1))
    # coordinates within max_modulus/2 of each other keep |x - mean| <= max_modulus after scaling
    half = 0.5 * max_modulus * math.sqrt(length_scale)
    p = make_measure(rng.uniform(-half, half, size=(n, dim)), rng.dirichlet(np.ones(n)))
    q = make_measure(rng.uniform(-half, half, size=(m, dim)), rng.dirichlet(np.ones(m)))
    return p, q, K.gaussian(length_scale)


def check_fock_oracle(n_instances: int = 50, cutoff: int = 40, tol: float = 1e-6,
                      seed: int = 3) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = worst_herm = worst_trace = max_modulus = 0.0
    for _ in range(n_instances):
        p, q, spec = oracle_instance(rng)
        support = M.joined_support(p, q)
        Z = fock.embed_points(support.points.data, spec.scale)
        max_modulus = max(max_modulus, float(np.max(np.abs(Z))))
        oracle = fock.dense_trace_distance(support, spec, cutoff)
        fast = M.qpm(p, q, spec).value
        worst = max(worst, abs(oracle.value - fast))
        worst_herm = max(worst_herm, oracle.hermitian_error)
        worst_trace = max(worst_trace, abs(oracle.operator_trace - math.fsum(support.coefficients)))
    return [
        _le("fock.oracle_vs_qpm", worst, tol, instances=n_instances, cutoff=cutoff,
            max_label_modulus=max_modulus),
        _le("fock.operator_hermitian", worst_herm, 1e-12),
        _le("fock.operator_trace_zero", worst_trace, 1e-10),
    ]


def random_complex_pairs(rng: np.random.Generator, n_pairs: int, max_modulus: float = 2.0,
                         max_modes: int = 2):
    """Pairs of complex vectors whose every entry has modulus <= ``max_modulus``."""
    pairs = []
    for _ in range(n_pairs):
        modes = int(rng.integers(1, max_modes + 1))
        def draw():
            r = max_modulus * np.sqrt(rng.uniform(size=modes))
            return r * np.exp(2j * np.pi * rng.uniform(size=modes))
        pairs.append((draw(), draw()))
    return pairs


def check_isometry(n_pairs: int = 100, cutoff: int = 40, tol: float = 1e-9, seed: int = 4) -> list[Check]:
    rng = np.random.default_rng(seed)
    dev = fock.isometry_check(random_complex_pairs(rng, n_pairs), cutoff)
    # under-truncation is expected to break the identity; recorded, not gated
    bad = fock.isometry_check([(np.array([-2.0]), np.array([2.0]))], cutoff=10)
    return [_le("fock.isometry", dev, tol, pairs=n_pairs, cutoff=cutoff,
                undertruncated_deviation_cutoff10=bad)]


# -- metric axioms --------------------------------------------------------------

def check_metric_axioms(n_triples: int = 1000, max_n: int = 20, seed: int = 5) -> list[Check]:
    rng = np.random.default_rng(seed)
    sym = 0.0
    slack = math.inf
    ident = 0.0
    min_distinct = math.inf
    for _ in range(n_triples):
        dim = int(rng.integers(1, 4))
        spec = K.gaussian(float(rng.uniform(0.5, 2.0)) * dim)
        ms = []
        for _ in range(3):
            n = int(rng.integers(1, max_n + 1))
            ms.append(make_measure(rng.normal(size=(n, dim)), rng.dirichlet(np.ones(n))))
        p, q, r = ms
        pq, qp = M.qpm(p, q, spec).value, M.qpm(q, p, spec).value
        qr, pr = M.qpm(q, r, spec).value, M.qpm(p, r, spec).value
        sym = max(sym, abs(pq - qp))
        slack = min(slack, pq + qr - pr)
        perm = rng.permutation(p.n_samples)
        p_shuffled = make_measure(p.points.data[perm], p.weights[perm])
        ident = max(ident, M.qpm(p, p_shuffled, spec).value)
        min_distinct = min(min_distinct, pq)
    return [
        _le("axioms.symmetry", sym, 1e-12, triples=n_triples),
        _ge("axioms.triangle_slack", slack, -1e-10),
        _le("axioms.identity_same_measure", ident, 1e-10),
        _ge("axioms.distinct_measures_positive", min_distinct, 1e-10),
    ]


# -- gradients --------------------------------------------------------------------

def finite_difference_gradient(p, q, spec, h: float = 1e-5) -> tuple[np.ndarray, float]:
    X = np.vstack([p.points.data, q.points.data])
    n = p.n_samples
    grad = np.zeros_like(X)

    def value(Xv, s=spec):
        return M.qpm(make_measure(Xv[:n], p.weights), make_measure(Xv[n:], q.weights), s).value

    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            Xp, Xm = X.copy(), X.copy()
            Xp[i, j] += h
            Xm[i, j] -= h
            grad[i, j] = (value(Xp) - value(Xm)) / (2 * h)
    s0 = spec.params
    up = K.KernelSpec(spec.family, (s0[0] + h,) + s0[1:])
    dn = K.KernelSpec(spec.family, (s0[0] - h,) + s0[1:])
    d_scale = (value(X, up) - value(X, dn)) / (2 * h)
    return grad, d_scale


def gradient_error(analytic, fd, atol: float) -> float:
    """Largest |analytic - fd| / max(|fd|, atol) over coordinates."""
    analytic, fd = np.atleast_1d(analytic), np.atleast_1d(fd)
    return float(np.max(np.abs(analytic - fd) / np.maximum(np.abs(fd), atol)))


def check_gradients(n_instances: int = 50, rtol: float = 1e-4, atol: float = 1e-6, h: float = 1e-5,
                    seed: int = 6) -> list[Check]:
    """Analytic QPM gradients against central differences, per kernel family.

    Coordinates whose finite-difference derivative is below ``atol`` are
    compared in absolute terms against ``rtol * atol``.
    """
    rng = np.random.default_rng(seed)
    checks = []
    for fam in SQRT_FAMILIES:
        worst = 0.0
        skipped = 0
        for _ in range(n_instances):
            dim = int(rng.integers(1, 3))
            n, m = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            p = make_measure(rng.normal(size=(n, dim)), rng.dirichlet(np.ones(n)))
            q = make_measure(rng.normal(size=(m, dim)), rng.dirichlet(np.ones(m)))
            spec = random_sqrt_family_kernel(rng, fam, dim)
            g = M.qpm_gradient(p, q, spec, wrt="both", strict=False)
            if not g.differentiable or g.epsilon_used:
                skipped += 1
                continue
            fd, fd_scale = finite_difference_gradient(p, q, spec, h)
            worst = max(worst, gradient_error(g.d_value_d_points, fd, atol),
                        gradient_error(g.d_value_d_lengthscale, fd_scale, atol))
        checks.append(_le(f"gradient.{fam}_vs_central_difference", worst, rtol,
                          instances=n_instances, skipped=skipped, h=h, atol=atol))
    # identical measures sit on the trace-norm kink and must be flagged
    p = make_measure(rng.normal(size=(4, 2)))
    flagged = not M.qpm_gradient(p, p, K.gaussian(1.0), strict=False).differentiable
    checks.append(Check("gradient.identical_measures_flagged", float(flagged), 1.0, flagged, "=="))
    return checks


# -- permutation test ---------------------------------------------------------------

def check_pvalue_formula() -> list[Check]:
    n_perm = 999
    cases = {
        "r=0": (p_value(0, n_perm), 1 / 1000),
        "r=n_perm": (p_value(n_perm, n_perm), 1.0),
    }
    rng = np.random.default_rng(7)
    a = rng.normal(size=(30, 1))
    far = permutation_test(a, a + 50.0, K.gaussian(1.0), "mmd", n_perm, seed=1)
    cases["separated samples"] = (far.p_value, 1 / (n_perm + 1))
    err = max(abs(got - want) for got, want in cases.values())
    return [Check("permutation.p_value_formula", err, 0.0, err == 0.0, "==",
                  {k: v[0] for k, v in cases.items()})]


def _median_gaussian(a, b) -> K.KernelSpec:
    return K.gaussian(K.median_heuristic(np.vstack([a, b]), 0.5) ** 2)


def check_calibration(statistic: str = "mmd", null_runs: int = 200, alt_runs: int = 100,
                      n: int = 100, n_perm: int = 199, alpha: float = 0.05,
                      null_band=(0.02, 0.10), power_floor: float = 0.95, seed: int = 8) -> list[Check]:
    rng = np.random.default_rng([seed, 0 if statistic == "mmd" else 1])
    null_p, alt_p = [], []
    for i in range(null_runs):
        a, b = rng.normal(size=(n, 1)), rng.normal(size=(n, 1))
        null_p.append(permutation_test(a, b, _median_gaussian(a, b), statistic, n_perm, seed=i).p_value)
    for i in range(alt_runs):
        a, b = rng.normal(size=(n, 1)), rng.normal(loc=3.0, size=(n, 1))
        alt_p.append(permutation_test(a, b, _median_gaussian(a, b), statistic, n_perm, seed=i).p_value)
    null_rate = float(np.mean(np.array(null_p) <= alpha))
    power = float(np.mean(np.array(alt_p) <= alpha))
    lo, hi = null_band
    return [
        Check(f"permutation.{statistic}_null_rejection_rate", null_rate, hi,
              lo <= null_rate <= hi, f"in [{lo}, {hi}]", {"runs": null_runs, "alpha": alpha}),
        _ge(f"permutation.{statistic}_shift_power", power, power_floor, runs=alt_runs,
            min_p_fraction=float(np.mean(np.array(alt_p) == 1 / (n_perm + 1)))),
    ]


# -- escape to infinity --------------------------------------------------------------

def check_escape(n_points: int = 200, spacing: float = 10.0, threshold: float = 0.05) -> list[Check]:
    records = M.escape_diagnostic(K.gaussian(1.0), n_points, spacing)
    last = records[-1]
    trace_dev = max(abs(r.trace - 1.0) for r in records)
    return [
        Check("escape.hs_norm_nonincreasing", float(M.is_nonincreasing(records)), 1.0,
              M.is_nonincreasing(records), "=="),
        Check("escape.hs_norm_at_max_n", last.hs_norm, threshold, last.hs_norm < threshold, "<",
              {"n": last.n, "support": last.n_support,
               "table": [(r.n, r.hs_norm, r.trace) for r in records if r.n in (0, 1, 10, 50, 100, 200)]}),
        _le("escape.trace_stays_one", trace_dev, 1e-12),
    ]


# -- high-dimensional power (reported, not gated) ---------------------------------------

def subspace_power_report(shifts=(0.5, 1.0), repeats: int = 20, n: int = 100, n_perm: int = 99,
                          dim: int = 784, alpha: float = 0.05, seed: int = 10) -> dict:
    """Rejection rates of MMD and QPM tests on standard normals in ``dim``
    dimensions whose means differ by ``shift`` in two coordinates only."""
    out = {"dim": dim, "n": n, "n_perm": n_perm, "repeats": repeats, "alpha": alpha, "rows": []}
    for shift in shifts:
        row = {"shift": shift}
        for statistic in ("mmd", "qpm"):
            rng = np.random.default_rng([seed, int(round(1000 * shift))])
            p = []
            for i in range(repeats):
                a, b = rng.standard_normal((n, dim)), rng.standard_normal((n, dim))
                b[:, :2] += shift
                p.append(permutation_test(a, b, _median_gaussian(a, b), statistic, n_perm, seed=i).p_value)
            p = np.array(p)
            row[statistic] = {"rejection_rate": float(np.mean(p <= alpha)), "mean_p": float(p.mean())}
        out["rows"].append(row)
    return out


# -- suites ----------------------------------------------------------------------------

def run_suite(suite: str, quick: bool = False) -> list[Check]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    checks: list[Check] = []
    plan = []
    if suite in ("fock", "all"):
        plan += [
            lambda: check_isometry(),
            lambda: check_fock_oracle(10 if quick else 50),
        ]
    if suite in ("escape", "all"):
        plan += [lambda: check_escape()]
    if suite in ("properties", "all"):
        plan += [
            lambda: check_point_mass_closed_forms(),
            lambda: check_spectral_equivalence(50 if quick else 200),
            lambda: check_metric_axioms(100 if quick else 1000),
            lambda: check_gradients(5 if quick else 50),
            lambda: check_pvalue_formula(),
        ]
    for step in plan:
        with _timed(checks):
            checks.extend(step())
    return checks
