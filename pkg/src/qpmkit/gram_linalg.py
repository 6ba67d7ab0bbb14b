"""Gram assembly, regularized Cholesky and the difference-operator spectrum."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _backend
from .errors import DimensionMismatch, NonSymmetric, SpectralDrift
from .kernels import KernelSpec
from .measures import as_pointset

CHOLESKY = "Cholesky"
PIVOTED = "PivotedCholesky"
FALLBACK = "GeneralEigenFallback"

SYMMETRY_TOL = 1e-12
DRIFT_TOL = 1e-8
LADDER_START = 1e-4


@dataclass(frozen=True, eq=False)
class GramFactorization:
    """``factor`` is N x N lower-triangular on the Cholesky path and N x rank
    (row-permuted lower trapezoid) on the pivoted path."""

    gram: np.ndarray
    factor: np.ndarray | None
    epsilon_used: float
    path: str
    attempts: tuple[float, ...] = ()

    @property
    def has_factor(self) -> bool:
        return self.path in (CHOLESKY, PIVOTED)


@dataclass(frozen=True, eq=False)
class SpectralReport:
    eigenvalues: np.ndarray
    sum_check: float
    discarded_imag_max: float
    path: str
    epsilon_used: float = 0.0
    # columns are eigenvectors of H^T C H, ordered like ``eigenvalues``
    eigenvectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def trace_norm(self) -> float:
        return math.fsum(np.abs(self.eigenvalues))

    @property
    def hs_norm(self) -> float:
        return math.sqrt(math.fsum(self.eigenvalues**2))

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "sum_check": self.sum_check,
            "discarded_imag_max": self.discarded_imag_max,
            "path": self.path,
            "epsilon_used": self.epsilon_used,
        }


def build_gram(points, spec: KernelSpec, backend: str | None = None) -> np.ndarray:
    """Kernel matrix over the rows of ``points`` (one triangle, mirrored)."""
    if not spec.is_normalized:
        raise ValueError("build_gram needs a normalized kernel; call normalize_kernel first")
    return _backend.gram_matrix(as_pointset(points).data, spec, backend=backend)


def epsilon_ladder(epsilon: float = 0.0, max_retries: int = 3) -> list[float]:
    """Regularization values tried in order: ``epsilon`` then a x10 ladder."""
    base = LADDER_START if epsilon < LADDER_START else epsilon * 10.0
    return [epsilon] + [base * 10.0**k for k in range(max_retries)]


def pivoted_cholesky(G: np.ndarray) -> np.ndarray | None:
    """Rank-revealing factor ``H`` (N x rank) with ``H H^T = G`` up to rounding.

    LAPACK's semidefinite pivoted Cholesky stops once the remaining
    diagonal falls below N * eps * max(diag), so numerically singular Gram
    matrices factor without any shift. Returns ``None`` on failure.
    """
    c, piv, rank, info = sla.lapack.dpstrf(G, lower=1, tol=-1.0)
    if info < 0 or rank < 1:
        return None
    H = np.zeros((G.shape[0], rank))
    H[piv - 1] = np.tril(c)[:, :rank]
    return H


def factor_gram(
    gram: np.ndarray, epsilon: float = 0.0, max_retries: int = 3, pivoted: bool = False
) -> GramFactorization:
    """Cholesky-factor ``gram + eps I``, escalating ``eps`` when it fails.

    With ``pivoted`` a rank-revealing pivoted Cholesky of the unshifted
    matrix is tried before the epsilon ladder. When every rung fails the
    result carries no factor and ``path`` is the general-eigensolver
    fallback.
    """
    G = np.asarray(gram, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionMismatch(f"Gram matrix must be square, got {G.shape}")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if G.size and np.max(np.abs(G - G.T)) > SYMMETRY_TOL:
        raise NonSymmetric("Gram matrix is not symmetric within 1e-12")
    ladder = epsilon_ladder(epsilon, max_retries)
    tried = []
    for k, eps in enumerate(ladder):
        tried.append(eps)
        A = G + eps * np.eye(G.shape[0]) if eps else G
        try:
            H = sla.cholesky(A, lower=True, check_finite=False)
        except sla.LinAlgError:
            if k == 0 and pivoted:
                H = pivoted_cholesky(A)
                if H is not None:
                    return GramFactorization(G, H, eps, PIVOTED, tuple(tried))
            continue
        return GramFactorization(G, H, eps, CHOLESKY, tuple(tried))
    return GramFactorization(G, None, 0.0, FALLBACK, tuple(tried))


def _recenter(eigenvalues: np.ndarray) -> tuple[np.ndarray, float]:
    s = math.fsum(eigenvalues)
    if abs(s) > DRIFT_TOL:
        raise SpectralDrift(f"eigenvalues sum to {s:.3e}; expected 0 within {DRIFT_TOL}")
    if eigenvalues.size:
        eigenvalues = eigenvalues - s / eigenvalues.size
    return eigenvalues, s


def hermitian_spectrum(H: np.ndarray, coefficients: np.ndarray, vectors: bool = False):
    """Eigen-decomposition of ``H^T diag(c) H``, descending."""
    M = H.T @ (coefficients[:, None] * H)
    M = 0.5 * (M + M.T)
    if vectors:
        w, V = sla.eigh(M, check_finite=False)
        return w[::-1], V[:, ::-1]
    return sla.eigh(M, eigvals_only=True, check_finite=False)[::-1], None


def general_spectrum(gram: np.ndarray, coefficients: np.ndarray) -> tuple[np.ndarray, float]:
    """Real parts of the eigenvalues of ``diag(c) G`` and the largest discarded imaginary part."""
    w = sla.eigvals(coefficients[:, None] * gram, check_finite=False)
    order = np.lexsort((np.abs(w.imag), -w.real))
    w = w[order]
    imag = float(np.max(np.abs(w.imag))) if w.size else 0.0
    return np.ascontiguousarray(w.real), imag


def difference_spectrum(
    fact: GramFactorization,
    coefficients,
    gram: np.ndarray | None = None,
    vectors: bool = False,
) -> SpectralReport:
    """Eigenvalues of the difference operator sum_i c_i |x_i><x_i|.

    Uses the Hermitian matrix ``H^T C H`` when a factor exists and
    the non-Hermitian ``C G`` otherwise. Raises :class:`SpectralDrift` when
    the eigenvalues do not sum to zero within 1e-8; within tolerance the
    mean is subtracted.
    """
    c = np.asarray(coefficients, dtype=np.float64).ravel()
    G = fact.gram if gram is None else np.asarray(gram, dtype=np.float64)
    if c.shape[0] != G.shape[0]:
        raise DimensionMismatch(f"{c.shape[0]} coefficients for a Gram of order {G.shape[0]}")
    if c.size == 0:
        return SpectralReport(np.empty(0), 0.0, 0.0, fact.path, fact.epsilon_used)
    if fact.has_factor:
        w, V = hermitian_spectrum(fact.factor, c, vectors)
        imag = 0.0
    else:
        w, imag = general_spectrum(G, c)
        V = None
    w, s = _recenter(w)
    return SpectralReport(w, s, imag, fact.path, fact.epsilon_used, V)
