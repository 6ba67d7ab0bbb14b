import math

import numpy as np
import pytest

from qpmkit import kernels as K
from qpmkit.errors import DimensionMismatch, NonSymmetric, SpectralDrift
from qpmkit.gram_linalg import (
    CHOLESKY, FALLBACK, PIVOTED, GramFactorization, build_gram, difference_spectrum,
    epsilon_ladder, factor_gram, pivoted_cholesky,
)
from qpmkit.measures import make_measure, signed_difference


def test_build_gram_small_cases():
    np.testing.assert_array_equal(build_gram([[0.5, 1.0]], K.gaussian(1.0)), [[1.0]])
    G = build_gram([[0.0], [1.0]], K.gaussian(1.0))
    e = math.exp(-1.0)
    np.testing.assert_allclose(G, [[1.0, e], [e, 1.0]], rtol=0, atol=1e-16)


@pytest.mark.parametrize("spec", [K.gaussian(2.0), K.laplacian(1.0), K.imq(1.0, 0.7),
                                  K.normalize_kernel(K.gmmn_mixture())])
def test_gram_diagonal_and_bit_symmetry(spec, rng):
    G = build_gram(rng.normal(size=(40, 3)), spec)
    assert np.all(np.diag(G) == 1.0)
    assert np.array_equal(G, G.T)


def test_build_gram_needs_normalized_kernel():
    with pytest.raises(ValueError):
        build_gram([[0.0], [1.0]], K.gmmn_mixture())


def test_epsilon_ladder():
    assert epsilon_ladder() == [0.0, 1e-4, 1e-3, 1e-2]
    assert epsilon_ladder(1e-3, 2) == [1e-3, 1e-2, 1e-1]


def test_identity_factor():
    f = factor_gram(np.eye(4))
    np.testing.assert_array_equal(f.factor, np.eye(4))
    assert f.epsilon_used == 0.0 and f.path == CHOLESKY


def test_all_ones_needs_regularization():
    G = np.ones((2, 2))
    f = factor_gram(G)
    assert f.path == CHOLESKY and f.epsilon_used == 1e-4
    assert f.attempts == (0.0, 1e-4)
    H = f.factor
    assert np.max(np.abs(H @ H.T - (G + 1e-4 * np.eye(2)))) <= 1e-10


def test_all_ones_pivoted_rung():
    G = np.ones((2, 2))
    f = factor_gram(G, pivoted=True)
    assert f.path == PIVOTED and f.epsilon_used == 0.0 and f.factor.shape == (2, 1)
    assert np.max(np.abs(f.factor @ f.factor.T - G)) <= 1e-10


def test_pivoted_cholesky_low_rank(rng):
    B = rng.normal(size=(12, 4))
    G = B @ B.T
    H = pivoted_cholesky(G)
    assert H.shape == (12, 4)
    assert np.max(np.abs(H @ H.T - G)) <= 1e-10


def test_random_spd_gram_factors_without_shift(rng):
    X = rng.uniform(-3, 3, size=(32, 2))
    G = build_gram(X, K.gaussian(1.0))
    f = factor_gram(G)
    assert f.epsilon_used == 0.0 and f.path == CHOLESKY
    assert np.max(np.abs(f.factor @ f.factor.T - G)) <= 1e-10


def test_fallback_when_ladder_is_exhausted():
    G = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite, no small shift helps
    f = factor_gram(G)
    assert f.path == FALLBACK and f.factor is None and not f.has_factor
    assert f.attempts == (0.0, 1e-4, 1e-3, 1e-2)


def test_factor_input_checks():
    with pytest.raises(NonSymmetric):
        factor_gram(np.array([[1.0, 0.5], [0.5 + 1e-9, 1.0]]))
    with pytest.raises(DimensionMismatch):
        factor_gram(np.ones((2, 3)))
    with pytest.raises(ValueError):
        factor_gram(np.eye(2), epsilon=-1.0)


def _spectrum(p, q, spec, path):
    s = signed_difference(p, q)
    G = build_gram(s.points, spec)
    fact = factor_gram(G) if path == CHOLESKY else GramFactorization(G, None, 0.0, FALLBACK)
    return difference_spectrum(fact, s.coefficients)


def test_point_mass_spectrum():
    # sqrt-kernel value exp(-1/2) so the base kernel is exp(-1)
    spec = K.gaussian(2.0)
    p, q = make_measure([[0.0]]), make_measure([[1.0]])
    want = math.sqrt(1.0 - math.exp(-1.0))
    for path in (CHOLESKY, FALLBACK):
        rep = _spectrum(p, q, spec, path)
        np.testing.assert_allclose(rep.eigenvalues, [want, -want], rtol=0, atol=1e-15)
        assert rep.path == path


def test_empty_spectrum():
    p = make_measure([[1.0]])
    s = signed_difference(p, p, merge_duplicates=True)
    fact = factor_gram(np.empty((0, 0)))
    rep = difference_spectrum(fact, s.coefficients)
    assert rep.eigenvalues.size == 0 and rep.trace_norm == 0.0


def test_hermitian_and_fallback_paths_agree(rng):
    p = make_measure(rng.normal(size=(5, 2)), rng.dirichlet(np.ones(5)))
    q = make_measure(rng.normal(size=(5, 2)), rng.dirichlet(np.ones(5)))
    spec = K.gaussian(3.0)
    herm = _spectrum(p, q, spec, CHOLESKY)
    gen = _spectrum(p, q, spec, FALLBACK)
    assert np.max(np.abs(herm.eigenvalues - gen.eigenvalues)) <= 1e-8
    assert herm.discarded_imag_max == 0.0
    assert np.all(np.diff(herm.eigenvalues) <= 0)


def test_fallback_imaginary_parts_small(rng):
    for n in (16, 64, 128):
        X = rng.uniform(-n ** 0.5, n ** 0.5, size=(2 * n, 2))
        p = make_measure(X[:n], rng.dirichlet(np.ones(n)))
        q = make_measure(X[n:], rng.dirichlet(np.ones(n)))
        rep = _spectrum(p, q, K.gaussian(1.0), FALLBACK)
        assert rep.discarded_imag_max <= 1e-8


def test_spectrum_is_linear_in_coefficients(rng):
    X = rng.normal(size=(10, 2))
    c = rng.normal(size=10)
    c -= c.mean()
    fact = factor_gram(build_gram(X, K.gaussian(2.0)))
    base = difference_spectrum(fact, c).eigenvalues
    for s in (0.5, 3.0):
        np.testing.assert_allclose(difference_spectrum(fact, s * c).eigenvalues, s * base, atol=1e-13)


def test_spectral_drift_is_reported():
    fact = factor_gram(np.eye(2))
    with pytest.raises(SpectralDrift):
        difference_spectrum(fact, [1.0, 0.0])


def test_drift_within_tolerance_is_recentred():
    fact = factor_gram(np.eye(2))
    rep = difference_spectrum(fact, [0.5 + 1e-10, -0.5])
    assert abs(math.fsum(rep.eigenvalues)) < 1e-15
    assert rep.sum_check == pytest.approx(1e-10, rel=1e-4)


def test_coefficient_length_checked():
    with pytest.raises(DimensionMismatch):
        difference_spectrum(factor_gram(np.eye(2)), [1.0, -0.5, -0.5])
