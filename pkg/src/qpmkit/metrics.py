"""MMD and QPM between discrete measures, QPM gradients, escape diagnostic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .errors import (
    FallbackPathNoGradient,
    NondifferentiablePoint,
    SqrtKernelUnavailable,
)
from .gram_linalg import (
    CHOLESKY,
    FALLBACK,
    GramFactorization,
    SpectralReport,
    build_gram,
    difference_spectrum,
    factor_gram,
)
from .kernels import (
    MIXTURE,
    KernelSpec,
    dkernel_dscale,
    dkernel_dsqdist,
    normalize_kernel,
    sqrt_kernel,
    sqrt_scale_factor,
)
from .measures import DiscreteMeasure, SignedSupport, has_coincident_rows, make_measure, signed_difference

MMD_BASE = "MMD_base"
MMD_SQUARED_KERNEL = "MMD_squared_kernel"
QPM = "QPM"
QPM_ISOMETRIC = "QPM_isometric"

# metric-level factorization tries a pivoted Cholesky before shifting the Gram
PIVOTED_DEFAULT = True

ZERO_TOL = 1e-10
CLUSTER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MetricReport:
    value: float
    kind: str
    kernel_used: dict
    epsilon_used: float = 0.0
    spectrum: SpectralReport | None = None
    clamped: bool = False
    support_size: int = 0

    def to_dict(self) -> dict:
        d = {
            "value": self.value,
            "kind": self.kind,
            "kernel_used": self.kernel_used,
            "epsilon_used": self.epsilon_used,
            "clamped": self.clamped,
            "support_size": self.support_size,
        }
        if self.spectrum is not None:
            d["spectrum"] = self.spectrum.to_dict()
        return d


@dataclass(frozen=True, eq=False)
class GradientReport:
    value: float
    differentiable: bool
    support: SignedSupport
    eigenvalues: np.ndarray
    d_value_d_points: np.ndarray | None = None
    d_value_d_lengthscale: float | None = None
    degenerate_clusters: list[list[int]] = field(default_factory=list)
    epsilon_used: float = 0.0


def _as_measure(m) -> DiscreteMeasure:
    return m if isinstance(m, DiscreteMeasure) else make_measure(m)


def joined_support(p, q, merge_duplicates: bool = True, merge_tolerance: float = 0.0) -> SignedSupport:
    """Signed support, merged only when some rows actually coincide.

    Without coincidences the unmerged support keeps the p-rows-then-q-rows
    order, which gradients rely on.
    """
    p, q = _as_measure(p), _as_measure(q)
    plain = signed_difference(p, q)
    if not merge_duplicates or not has_coincident_rows(plain.points, merge_tolerance):
        return plain
    return signed_difference(p, q, merge_duplicates=True, merge_tolerance=merge_tolerance)


def gram_kernel(spec: KernelSpec, use_sqrt_kernel: bool) -> KernelSpec:
    spec = normalize_kernel(spec)
    if not use_sqrt_kernel:
        return spec
    status = sqrt_kernel(spec)
    if not status.valid:
        raise SqrtKernelUnavailable(f"{spec.family} kernel has no closed-form square root")
    return status.sqrt_spec


def mmd(p, q, spec: KernelSpec, backend: str | None = None, *, merge_duplicates: bool = True,
        merge_tolerance: float = 0.0) -> MetricReport:
    """Biased (V-statistic) MMD from the quadratic form c^T G c.

    Coincident rows are merged first so identical measures give exactly 0
    rather than the square root of round-off.
    """
    spec = normalize_kernel(spec)
    support = joined_support(p, q, merge_duplicates, merge_tolerance)
    c = support.coefficients
    if support.is_empty:
        return MetricReport(0.0, MMD_BASE, spec.describe())
    G = build_gram(support.points, spec, backend=backend)
    quad = float(c @ (G @ c))
    clamped = quad < 0
    return MetricReport(
        math.sqrt(max(0.0, quad)), MMD_BASE, spec.describe(), clamped=clamped, support_size=support.size
    )


@dataclass(frozen=True, eq=False)
class _Solved:
    support: SignedSupport
    kernel: KernelSpec
    fact: GramFactorization | None
    spectrum: SpectralReport


def _solve(
    p,
    q,
    spec,
    use_sqrt_kernel=True,
    epsilon=0.0,
    max_retries=3,
    merge_duplicates=True,
    merge_tolerance=0.0,
    force_fallback=False,
    vectors=False,
    backend=None,
) -> _Solved:
    kern = gram_kernel(spec, use_sqrt_kernel)
    support = joined_support(p, q, merge_duplicates, merge_tolerance)
    if support.is_empty:
        empty = SpectralReport(np.empty(0), 0.0, 0.0, CHOLESKY, 0.0)
        return _Solved(support, kern, None, empty)
    G = build_gram(support.points, kern, backend=backend)
    if force_fallback:
        fact = GramFactorization(G, None, 0.0, FALLBACK)
    else:
        fact = factor_gram(G, epsilon, max_retries, pivoted=PIVOTED_DEFAULT)
    return _Solved(support, kern, fact, difference_spectrum(fact, support.coefficients, vectors=vectors))


def qpm(
    p,
    q,
    spec: KernelSpec,
    use_sqrt_kernel: bool = True,
    isometric_scaling: bool = False,
    *,
    epsilon: float = 0.0,
    max_retries: int = 3,
    merge_duplicates: bool = True,
    merge_tolerance: float = 0.0,
    force_fallback: bool = False,
    backend: str | None = None,
) -> MetricReport:
    """Trace distance 1/2 sum |lambda_i| between the embedded measures.

    With ``use_sqrt_kernel`` the Gram matrix is built from the square root
    of ``spec``, so the Hilbert-Schmidt geometry reproduces ``spec`` itself.
    Coincident rows are merged before factorization unless
    ``merge_duplicates`` is off, in which case the epsilon ladder and then
    the general eigensolver take over.
    """
    s = _solve(p, q, spec, use_sqrt_kernel, epsilon, max_retries, merge_duplicates,
               merge_tolerance, force_fallback, backend=backend)
    value = 0.5 * s.spectrum.trace_norm
    kind = QPM
    if isometric_scaling:
        value *= math.sqrt(2.0)
        kind = QPM_ISOMETRIC
    return MetricReport(value, kind, s.kernel.describe(), s.spectrum.epsilon_used, s.spectrum,
                        support_size=s.support.size)


def mmd_squared_kernel(
    p,
    q,
    spec: KernelSpec,
    use_sqrt_kernel: bool = True,
    *,
    epsilon: float = 0.0,
    max_retries: int = 3,
    merge_duplicates: bool = True,
    merge_tolerance: float = 0.0,
    force_fallback: bool = False,
    backend: str | None = None,
) -> MetricReport:
    """Hilbert-Schmidt distance sqrt(sum lambda_i^2) from the QPM spectrum."""
    s = _solve(p, q, spec, use_sqrt_kernel, epsilon, max_retries, merge_duplicates,
               merge_tolerance, force_fallback, backend=backend)
    return MetricReport(s.spectrum.hs_norm, MMD_SQUARED_KERNEL, s.kernel.describe(),
                        s.spectrum.epsilon_used, s.spectrum, support_size=s.support.size)


def _clusters(eigenvalues: np.ndarray, tol: float) -> list[list[int]]:
    groups, current = [], [0]
    for i in range(1, len(eigenvalues)):
        if abs(eigenvalues[i - 1] - eigenvalues[i]) < tol:
            current.append(i)
        else:
            groups.append(current)
            current = [i]
    groups.append(current)
    return [g for g in groups if len(g) > 1]


def _adjoint_gram(solved: _Solved) -> np.ndarray:
    """Sensitivity of the QPM to each Gram entry.

    Each eigenvalue of C G obeys d(lambda) = lambda a^T dG a, where
    a = C H v / lambda is its right eigenvector scaled so a^T G a = 1 and v
    is the unit eigenvector of H^T C H. Summing sign(lambda) d(lambda) / 2
    gives (1/2) A |Lambda| A^T.
    """
    H = solved.fact.factor
    lam = solved.spectrum.eigenvalues
    A = (solved.support.coefficients[:, None] * H) @ solved.spectrum.eigenvectors / lam
    Gbar = 0.5 * (A * np.abs(lam)) @ A.T
    return 0.5 * (Gbar + Gbar.T)


def qpm_gradient(
    p,
    q,
    spec: KernelSpec,
    wrt: str = "points",
    cluster_tol: float = CLUSTER_TOL,
    *,
    zero_tol: float = ZERO_TOL,
    use_sqrt_kernel: bool = True,
    strict: bool = True,
    epsilon: float = 0.0,
    max_retries: int = 3,
    merge_duplicates: bool = True,
    backend: str | None = None,
) -> GradientReport:
    """Analytic gradient of the (unscaled) QPM.

    ``wrt`` is ``"points"`` (one row per support point, p rows first when
    nothing was merged), ``"length_scale"`` (the first parameter of
    ``spec``) or ``"both"``. Eigenvalues within ``zero_tol`` of zero, or
    clusters closer than ``cluster_tol`` that straddle zero, make the point
    nondifferentiable: with ``strict`` this raises, otherwise the report
    comes back with ``differentiable=False`` and no gradient.
    """
    if wrt not in ("points", "length_scale", "both"):
        raise ValueError(f"wrt must be 'points', 'length_scale' or 'both', got {wrt!r}")
    s = _solve(p, q, spec, use_sqrt_kernel, epsilon, max_retries, merge_duplicates,
               vectors=True, backend=backend)
    lam = s.spectrum.eigenvalues
    value = 0.5 * s.spectrum.trace_norm

    def nondiff(reason, clusters=()):
        if strict:
            raise NondifferentiablePoint(reason)
        return GradientReport(value, False, s.support, lam, degenerate_clusters=list(clusters),
                              epsilon_used=s.spectrum.epsilon_used)

    if s.support.is_empty:
        return nondiff("identical measures: every eigenvalue is zero")
    if not s.fact.has_factor:
        raise FallbackPathNoGradient("gradients need a Cholesky factor; the fallback path has none")
    clusters = _clusters(lam, cluster_tol)
    if np.any(np.abs(lam) <= zero_tol):
        return nondiff("an eigenvalue sits at zero (trace-norm kink)", clusters)
    for g in clusters:
        signs = np.sign(lam[g])
        if signs.min() != signs.max():
            return nondiff(f"eigenvalue cluster {g} straddles zero", clusters)

    Gbar = _adjoint_gram(s)
    X = s.support.points.data
    r2 = cdist(X, X, "sqeuclidean")
    d_points = d_scale = None
    if wrt in ("points", "both"):
        W = Gbar * dkernel_dsqdist(s.kernel, r2)
        np.fill_diagonal(W, 0.0)
        # dG_jk/dx_j = k'(r2) * 2 (x_j - x_k); G_jk and G_kj both move
        d_points = 4.0 * (W.sum(axis=1)[:, None] * X - W @ X)
    if wrt in ("length_scale", "both"):
        base = normalize_kernel(spec)
        if base.family == MIXTURE:
            raise ValueError("mixture kernels have no single length scale")
        dG = dkernel_dscale(s.kernel, r2)
        chain = sqrt_scale_factor(base) if use_sqrt_kernel else 1.0
        d_scale = float(np.sum(Gbar * dG)) * chain
    return GradientReport(value, True, s.support, lam, d_points, d_scale, clusters,
                          s.spectrum.epsilon_used)


def qpm_directional_derivative(H: np.ndarray, coefficients, dG: np.ndarray) -> float:
    """Derivative of 1/2 sum|lambda| along a Gram perturbation ``dG``.

    Forward-mode route: dH from d(H H^T) = dG, then
    dM = dH^T C H + H^T C dH and d(lambda_i) = v_i^T dM v_i.
    Used to cross-check the adjoint formula in :func:`qpm_gradient`.
    """
    c = np.asarray(coefficients, dtype=np.float64)
    M = H.T @ (c[:, None] * H)
    lam, V = sla.eigh(0.5 * (M + M.T))
    Hinv_dG = sla.solve_triangular(H, dG, lower=True)
    S = sla.solve_triangular(H, Hinv_dG.T, lower=True).T  # H^-1 dG H^-T
    Phi = np.tril(S, -1) + 0.5 * np.diag(np.diag(S))
    dH = H @ Phi
    dM = dH.T @ (c[:, None] * H)
    dM = dM + dM.T
    dlam = np.einsum("ij,ik,kj->j", V, dM, V)
    return 0.5 * float(np.sum(np.sign(lam) * dlam))


@dataclass(frozen=True)
class EscapeRecord:
    n: int
    n_support: int
    hs_norm: float
    trace: float


def escape_diagnostic(
    spec: KernelSpec, n_points: int, spacing: float, ns=None, backend: str | None = None
) -> list[EscapeRecord]:
    """Embedded norms of uniform measures on growing 1-D grids.

    For each ``n`` the measure is uniform on ``{k * spacing : -n <= k <= n}``.
    Its embedding keeps unit trace while the Hilbert-Schmidt norm
    sqrt(mean of the Gram matrix) shrinks toward zero.
    """
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    if n_points < 0:
        raise ValueError("n_points must be >= 0")
    spec = normalize_kernel(spec)
    ns = range(n_points + 1) if ns is None else ns
    records = []
    for n in ns:
        grid = spacing * np.arange(-n, n + 1, dtype=np.float64)[:, None]
        N = grid.shape[0]
        G = build_gram(grid, spec, backend=backend)
        w = np.full(N, 1.0 / N)
        hs2 = float(w @ (G @ w))
        trace = math.fsum(w * np.diag(G))
        records.append(EscapeRecord(int(n), N, math.sqrt(max(hs2, 0.0)), trace))
    return records


def is_nonincreasing(records: list[EscapeRecord], slack: float = 0.0) -> bool:
    norms = [r.hs_norm for r in records]
    return all(b <= a + slack for a, b in zip(norms, norms[1:]))
