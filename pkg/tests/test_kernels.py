import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import least_squares

from qpmkit import kernels as K
from qpmkit.errors import BadGrid, DimensionMismatch, TooFewPoints
from qpmkit.gram_linalg import build_gram

# Fitted once with the default 512-point grid and frozen as regression values.
GMMN_FIT_LENGTH_SCALE = 3.0026107241341315
GMMN_FIT_ALPHA = 1.118429119945409
GMMN_FIT_RMSE = 0.01799908235158891


def all_families(dim=1):
    return [
        K.gaussian(1.5 * dim),
        K.laplacian(1.2 * math.sqrt(dim)),
        K.imq(math.sqrt(dim), 1.7),
        K.normalize_kernel(K.gmmn_mixture()),
    ]


def test_gaussian_values():
    g = K.gaussian(1.0)
    assert K.eval_kernel(g, [0.3], [0.3]) == 1.0
    assert K.eval_kernel(g, [0.0], [1.0]) == pytest.approx(math.exp(-1.0), abs=1e-15)


def test_imq_hand_value():
    # |x - y|^2 = 2 with length 1 and alpha 2: (1 + 2/4)^-2
    assert K.eval_kernel(K.imq(1.0, 2.0), [0.0, 0.0], [1.0, 1.0]) == pytest.approx(4 / 9, abs=1e-15)


def test_laplacian_value():
    assert K.eval_kernel(K.laplacian(2.0), [0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.exp(-2.5), abs=1e-15)


def test_mixture_value_and_normalization():
    mix = K.mixture([(2.0, 1.0), (4.0, 3.0)])
    assert mix.diagonal == 6.0 and not mix.is_normalized
    norm = K.normalize_kernel(mix)
    assert K.eval_kernel(norm, [1.0], [1.0]) == pytest.approx(1.0, abs=1e-15)
    v = K.eval_kernel(mix, [0.0], [1.0])
    assert v == pytest.approx(2 * math.exp(-1) + 4 * math.exp(-1 / 3), abs=1e-14)
    assert K.eval_kernel(norm, [0.0], [1.0]) == pytest.approx(v / 6, abs=1e-15)


def test_normalize_leaves_single_families():
    for spec in all_families()[:3]:
        assert K.normalize_kernel(spec) is spec


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        K.eval_kernel(K.gaussian(1.0), [0.0], [0.0, 1.0])


@pytest.mark.parametrize("bad", [("gaussian", (0.0,)), ("imq", (1.0,)), ("mixture", (1.0,)),
                                 ("laplacian", (-1.0,)), ("cosine", (1.0,))])
def test_invalid_specs(bad):
    with pytest.raises(ValueError):
        K.KernelSpec(*bad)


def test_sigma_parameterization():
    assert K.gaussian_sigma(3.0).scale == 18.0
    mix = K.gmmn_mixture()
    assert [ls for _, ls in mix.components] == [2 * s for s in K.GMMN_SIGMA2]


def test_sqrt_closed_forms():
    assert K.sqrt_kernel(K.gaussian(2.0)).sqrt_spec == K.gaussian(4.0)
    assert K.sqrt_kernel(K.laplacian(1.0)).sqrt_spec == K.laplacian(2.0)
    s = K.sqrt_kernel(K.imq(1.5, 3.0)).sqrt_spec
    ls, alpha = s.params
    assert alpha == 1.5
    assert 2 * alpha * ls**2 == pytest.approx(2 * 3.0 * 1.5**2, rel=1e-15)
    status = K.sqrt_kernel(K.gmmn_mixture())
    assert not status.valid and status.tag == "Invalid" and status.sqrt_spec is None


@pytest.mark.parametrize("dim", [1, 2, 16, 784])
def test_sqrt_consistency_random_pairs(dim):
    rng = np.random.default_rng(dim)
    for spec in all_families(dim)[:3]:
        root = K.sqrt_kernel(spec).sqrt_spec
        worst = 0.0
        for _ in range(1000):
            x, y = rng.normal(size=dim), rng.normal(size=dim)
            worst = max(worst, abs(K.eval_kernel(root, x, y) ** 2 - K.eval_kernel(spec, x, y)))
        assert worst <= 1e-12, (spec, worst)


coords = st.floats(-3.0, 3.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([1, 2, 16]), st.data(), st.sampled_from(range(4)))
def test_symmetry_and_bounds(dim, data, which):
    spec = all_families(dim)[which]
    x = data.draw(arrays(np.float64, dim, elements=coords))
    y = data.draw(arrays(np.float64, dim, elements=coords))
    kxy = K.eval_kernel(spec, x, y)
    assert kxy == K.eval_kernel(spec, y, x)
    assert 0.0 < kxy <= K.eval_kernel(spec, x, x) == 1.0


@pytest.mark.parametrize("which", range(4))
def test_gram_positive_definite(which):
    rng = np.random.default_rng(100 + which)
    for n in (2, 8, 32, 64):
        dim = 3
        spec = all_families(dim)[which]
        G = build_gram(rng.uniform(-2, 2, size=(n, dim)), spec)
        assert np.linalg.eigvalsh(G).min() > 0


def test_median_heuristic_examples():
    assert K.median_heuristic([[0.0], [2.0]]) == 1.0
    assert K.median_heuristic([[0.0], [1.0], [2.0]], fraction=1.0) == 1.0
    with pytest.raises(TooFewPoints):
        K.median_heuristic([[0.0]])
    with pytest.raises(ValueError):
        K.median_heuristic([[0.0], [1.0]], fraction=0.0)


def test_median_heuristic_subsample_is_deterministic(rng):
    X = rng.normal(size=(3000, 2))
    a, b = K.median_heuristic(X), K.median_heuristic(X)
    assert a == b
    # subsampling error is small relative to the full median
    from scipy.spatial.distance import pdist
    assert a == pytest.approx(0.5 * np.median(pdist(X)), rel=0.02)


def test_default_fit_grid():
    grid = K.default_fit_grid(K.gmmn_mixture())
    assert grid.size == 512 and grid[0] == 0.0
    assert grid[-1] == pytest.approx(3 * math.sqrt(80.0))


def test_imq_fit_single_gaussian():
    grid = np.linspace(0.0, 5.0, 501)
    fit = K.fit_imq_to_mixture(K.mixture([(1.0, 1.0)]), grid)
    err = np.max(np.abs(K.kernel_from_sqdist(fit.spec, grid**2) - np.exp(-grid**2)))
    assert err < 1e-3
    assert fit.spec.family == K.IMQ


def test_imq_fit_gmmn_regression():
    fit = K.fit_imq_to_mixture(K.gmmn_mixture())
    ls, alpha = fit.spec.params
    assert ls == pytest.approx(GMMN_FIT_LENGTH_SCALE, rel=1e-6)
    assert alpha == pytest.approx(GMMN_FIT_ALPHA, rel=1e-6)
    assert fit.rmse == pytest.approx(GMMN_FIT_RMSE, rel=1e-6)


def test_imq_fit_is_least_squares_optimal():
    # an independent local least-squares solve must not find a better fit
    mix = K.normalize_kernel(K.gmmn_mixture())
    grid = K.default_fit_grid(mix)
    target = K.kernel_from_sqdist(mix, grid**2)
    fit = K.fit_imq_to_mixture(mix, grid)

    def resid(theta):
        ls, alpha = np.exp(theta)
        return (1 + grid**2 / (2 * alpha * ls**2)) ** (-alpha) - target

    for start in ([0.0, 0.0], [2.0, 1.0], [1.0, -1.0]):
        sol = least_squares(resid, start, xtol=1e-14, ftol=1e-14)
        assert fit.rmse <= math.sqrt(np.mean(sol.fun**2)) + 1e-9


@pytest.mark.parametrize("grid", [[], [0.0, 0.0], [1.0, np.nan], [-1.0, 2.0]])
def test_imq_fit_bad_grid(grid):
    with pytest.raises(BadGrid):
        K.fit_imq_to_mixture(K.gmmn_mixture(), grid)


def test_imq_fit_needs_mixture():
    with pytest.raises(ValueError):
        K.fit_imq_to_mixture(K.gaussian(1.0))
