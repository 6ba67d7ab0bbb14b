"""Truncated Fock-space ground truth for the QPM.

Coherent states are built directly from their Fock expansion
``|z> = exp(-|z|^2/2) sum_n z^n / sqrt(n!) |n>`` (one harmonic-oscillator mode
per complex coordinate), the difference operator is assembled as a dense
matrix in the truncated basis, and its trace norm comes from a plain
Hermitian eigensolve. Nothing here evaluates a kernel or factors a Gram
matrix, so it checks the fast path independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.stats import poisson

from .errors import CutoffTooLarge, NonGaussianBase
from .kernels import GAUSSIAN, KernelSpec
from .measures import SignedSupport

MAX_DIMENSION = 4096
DEFAULT_CUTOFF = 40


@dataclass(frozen=True, eq=False)
class TruncatedCoherentState:
    z: np.ndarray
    cutoff: int
    amplitudes: np.ndarray
    tail_bound: float

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


@dataclass(frozen=True, eq=False)
class DenseOperator:
    matrix: np.ndarray
    trace: float
    hermitian_error: float


@dataclass(frozen=True, eq=False)
class DenseTraceDistance:
    value: float
    eigenvalues: np.ndarray
    truncation_bound: float
    operator_trace: float
    hermitian_error: float
    cutoff: int
    n_modes: int


def truncated_dimension(n_modes: int, cutoff: int) -> int:
    return (cutoff + 1) ** n_modes


def _check_size(n_modes: int, cutoff: int):
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if truncated_dimension(n_modes, cutoff) > MAX_DIMENSION:
        raise CutoffTooLarge(
            f"({cutoff}+1)^{n_modes} basis states exceed the oracle limit of {MAX_DIMENSION}"
        )


def poisson_tail(z, cutoff: int) -> float:
    """Probability mass a coherent state puts above ``cutoff`` in any mode."""
    mean = np.abs(np.atleast_1d(np.asarray(z, dtype=complex))) ** 2
    tails = poisson.sf(cutoff, mean)
    return float(-np.expm1(np.sum(np.log1p(-tails))))


def _mode_amplitudes(z: complex, cutoff: int) -> np.ndarray:
    a = np.empty(cutoff + 1, dtype=complex)
    a[0] = math.exp(-0.5 * abs(z) ** 2)
    for n in range(cutoff):
        a[n + 1] = a[n] * z / math.sqrt(n + 1)
    return a


def coherent_state(z, cutoff: int = DEFAULT_CUTOFF) -> TruncatedCoherentState:
    """Multi-mode coherent state truncated at ``cutoff`` quanta per mode."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    _check_size(z.size, cutoff)
    amp = np.ones(1, dtype=complex)
    for zk in z:
        amp = np.multiply.outer(amp, _mode_amplitudes(complex(zk), cutoff)).ravel()
    return TruncatedCoherentState(z, cutoff, amp, poisson_tail(z, cutoff))


def embed_points(points: np.ndarray, length_scale: float, pairing: bool = False) -> np.ndarray:
    """Map real points to coherent-state labels for a Gaussian kernel.

    Points are recentred and divided by sqrt(length_scale), so that
    |<w|z>|^2 = exp(-|x - y|^2 / length_scale). By default each real
    coordinate becomes one mode with a real label. With ``pairing`` the
    coordinates are paired into complex numbers (odd dimension padded with
    zero); that preserves the Hilbert-Schmidt kernel but adds relative
    phases to the state overlaps, which changes the trace norm for three or
    more points in two or more dimensions.
    """
    X = np.asarray(points, dtype=np.float64)
    X = (X - X.mean(axis=0)) / math.sqrt(length_scale)
    if not pairing:
        return X.astype(complex)
    if X.shape[1] % 2:
        X = np.hstack([X, np.zeros((X.shape[0], 1))])
    return X[:, 0::2] + 1j * X[:, 1::2]


def difference_operator(states: list[TruncatedCoherentState], coefficients) -> DenseOperator:
    psi = np.stack([s.amplitudes for s in states], axis=1)
    if not np.any(psi.imag):
        psi = psi.real
    c = np.asarray(coefficients, dtype=np.float64)
    D = (psi * c) @ psi.conj().T
    herm = float(np.max(np.abs(D - D.conj().T))) if D.size else 0.0
    D = 0.5 * (D + D.conj().T)
    return DenseOperator(D, float(np.trace(D).real), herm)


def dense_trace_distance(
    support: SignedSupport,
    spec_base: KernelSpec,
    cutoff: int = DEFAULT_CUTOFF,
    pairing: bool = False,
) -> DenseTraceDistance:
    """Trace distance 1/2 ||sum_i c_i |z_i><z_i| ||_1 in a truncated Fock basis.

    ``spec_base`` is the Gaussian kernel the Hilbert-Schmidt geometry should
    reproduce. ``truncation_bound`` bounds the error from dropping the
    Poisson tail of every state.
    """
    if spec_base.family != GAUSSIAN:
        raise NonGaussianBase(f"the coherent-state oracle needs a Gaussian kernel, got {spec_base.family}")
    if support.is_empty:
        return DenseTraceDistance(0.0, np.empty(0), 0.0, 0.0, 0.0, cutoff, 0)
    Z = embed_points(support.points.data, spec_base.scale, pairing)
    _check_size(Z.shape[1], cutoff)
    states = [coherent_state(z, cutoff) for z in Z]
    op = difference_operator(states, support.coefficients)
    lam = sla.eigvalsh(op.matrix, check_finite=False)[::-1]
    c = np.abs(support.coefficients)
    tails = np.array([s.tail_bound for s in states])
    bound = 0.5 * float(np.sum(c * (2.0 * np.sqrt(tails) + tails)))
    return DenseTraceDistance(
        0.5 * math.fsum(np.abs(lam)), lam, bound, op.trace, op.hermitian_error, cutoff, Z.shape[1]
    )


def isometry_check(pairs, cutoff: int = DEFAULT_CUTOFF) -> float:
    """Max over pairs of | |<w|z>|^2 - exp(-|w - z|^2) | with truncated states."""
    worst = 0.0
    for w, z in pairs:
        sw, sz = coherent_state(w, cutoff), coherent_state(z, cutoff)
        overlap = abs(np.vdot(sw.amplitudes, sz.amplitudes)) ** 2
        exact = math.exp(-float(np.sum(np.abs(sw.z - sz.z) ** 2)))
        worst = max(worst, abs(overlap - exact))
    return worst
