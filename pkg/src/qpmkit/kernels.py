"""Kernel families, square-root kernels and bandwidth heuristics.

All kernels are radial and evaluated from the squared distance ``r2``:

- ``gaussian``:  exp(-r2 / length_scale)
- ``laplacian``: exp(-sqrt(r2) / scale)
- ``imq``:       (1 + r2 / (2 alpha length_scale**2)) ** -alpha
- ``mixture``:   sum_k w_k exp(-r2 / length_scale_k)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import pdist

from .errors import BadGrid, DimensionMismatch, NonFiniteInput, TooFewPoints
from .measures import as_pointset

GAUSSIAN = "gaussian"
LAPLACIAN = "laplacian"
IMQ = "imq"
MIXTURE = "mixture"
FAMILIES = (GAUSSIAN, LAPLACIAN, IMQ, MIXTURE)

# bandwidths of the GMMN mixture, as sigma^2 in exp(-r^2 / (2 sigma^2))
GMMN_SIGMA2 = (2.0, 5.0, 10.0, 20.0, 40.0, 80.0)

MEDIAN_SUBSAMPLE = 2048
MEDIAN_SEED = 0


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel family with its parameters.

    ``params`` is ``(length_scale,)`` for gaussian, ``(scale,)`` for
    laplacian, ``(length_scale, alpha)`` for imq and the flat sequence
    ``(w_1, length_scale_1, w_2, length_scale_2, ...)`` for mixture.
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        params = tuple(float(v) for v in self.params)
        expected = {GAUSSIAN: 1, LAPLACIAN: 1, IMQ: 2}.get(self.family)
        if expected is not None and len(params) != expected:
            raise ValueError(f"{self.family} takes {expected} parameter(s), got {len(params)}")
        if self.family == MIXTURE and (len(params) == 0 or len(params) % 2):
            raise ValueError("mixture params must be (weight, length_scale) pairs")
        if not all(math.isfinite(v) and v > 0 for v in params):
            raise ValueError(f"kernel parameters must be finite and > 0, got {params}")
        object.__setattr__(self, "params", params)

    @property
    def components(self) -> list[tuple[float, float]]:
        if self.family != MIXTURE:
            raise AttributeError("only mixtures have components")
        return list(zip(self.params[::2], self.params[1::2]))

    @property
    def scale(self) -> float:
        """The primary length parameter (not defined for mixtures)."""
        if self.family == MIXTURE:
            raise AttributeError("mixtures have no single scale")
        return self.params[0]

    @property
    def diagonal(self) -> float:
        """Value of k(x, x)."""
        if self.family == MIXTURE:
            return math.fsum(self.params[::2])
        return 1.0

    @property
    def is_normalized(self) -> bool:
        return self.diagonal == 1.0

    def describe(self) -> dict:
        d = {"family": self.family}
        if self.family == GAUSSIAN:
            d["length_scale"] = self.params[0]
        elif self.family == LAPLACIAN:
            d["scale"] = self.params[0]
        elif self.family == IMQ:
            d["length_scale"], d["alpha"] = self.params
        else:
            d["components"] = [{"weight": w, "length_scale": ls} for w, ls in self.components]
        return d


def gaussian(length_scale: float) -> KernelSpec:
    return KernelSpec(GAUSSIAN, (length_scale,))


def gaussian_sigma(sigma: float) -> KernelSpec:
    """Gaussian in the textbook exp(-r^2 / (2 sigma^2)) parameterization."""
    return KernelSpec(GAUSSIAN, (2.0 * sigma * sigma,))


def laplacian(scale: float) -> KernelSpec:
    return KernelSpec(LAPLACIAN, (scale,))


def imq(length_scale: float, alpha: float) -> KernelSpec:
    return KernelSpec(IMQ, (length_scale, alpha))


def mixture(components: Sequence[tuple[float, float]]) -> KernelSpec:
    flat = [v for pair in components for v in pair]
    return KernelSpec(MIXTURE, tuple(flat))


def gmmn_mixture() -> KernelSpec:
    """Equal-weight mixture of six Gaussians used by the GMMN MNIST model."""
    return mixture([(1.0, 2.0 * s2) for s2 in GMMN_SIGMA2])


def kernel_from_sqdist(spec: KernelSpec, r2):
    """Evaluate ``spec`` elementwise on squared distances."""
    r2 = np.asarray(r2, dtype=np.float64)
    fam, p = spec.family, spec.params
    if fam == GAUSSIAN:
        return np.exp(-r2 / p[0])
    if fam == LAPLACIAN:
        return np.exp(-np.sqrt(r2) / p[0])
    if fam == IMQ:
        ls, alpha = p
        return (1.0 + r2 / (2.0 * alpha * ls * ls)) ** (-alpha)
    out = np.zeros_like(r2)
    for w, ls in spec.components:
        out = out + w * np.exp(-r2 / ls)
    # the rounded sum of weights can miss the exact total at r = 0
    return np.where(r2 == 0.0, spec.diagonal, out)


def dkernel_dsqdist(spec: KernelSpec, r2):
    """Derivative of the kernel with respect to the squared distance.

    Undefined for the laplacian at ``r2 == 0``; callers only use it off the
    diagonal.
    """
    r2 = np.asarray(r2, dtype=np.float64)
    fam, p = spec.family, spec.params
    if fam == GAUSSIAN:
        return -np.exp(-r2 / p[0]) / p[0]
    if fam == LAPLACIAN:
        r = np.sqrt(r2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, -np.exp(-r / p[0]) / (2.0 * p[0] * r), 0.0)
    if fam == IMQ:
        ls, alpha = p
        denom = 2.0 * alpha * ls * ls
        return -(alpha / denom) * (1.0 + r2 / denom) ** (-alpha - 1.0)
    out = np.zeros_like(r2)
    for w, ls in spec.components:
        out = out - (w / ls) * np.exp(-r2 / ls)
    return out


def dkernel_dscale(spec: KernelSpec, r2):
    """Derivative with respect to ``params[0]`` (length scale or scale)."""
    r2 = np.asarray(r2, dtype=np.float64)
    fam, p = spec.family, spec.params
    if fam == GAUSSIAN:
        return r2 / (p[0] * p[0]) * np.exp(-r2 / p[0])
    if fam == LAPLACIAN:
        r = np.sqrt(r2)
        return r / (p[0] * p[0]) * np.exp(-r / p[0])
    if fam == IMQ:
        ls, alpha = p
        denom = 2.0 * alpha * ls * ls
        u = r2 / denom
        # d/dls of (1+u)^-alpha with du/dls = -2u/ls
        return 2.0 * alpha * u / ls * (1.0 + u) ** (-alpha - 1.0)
    raise ValueError("mixture kernels have no single scale parameter")


def _check_point(x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise DimensionMismatch("a point must be a 1-D coordinate vector")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("point coordinates contain NaN or Inf")
    return x


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x, y = _check_point(x), _check_point(y)
    if x.shape != y.shape:
        raise DimensionMismatch(f"points have dimensions {x.shape[0]} and {y.shape[0]}")
    d = x - y
    r2 = float(np.dot(d, d))
    return float(kernel_from_sqdist(spec, r2))


@dataclass(frozen=True)
class SqrtStatus:
    tag: str
    sqrt_spec: KernelSpec | None = None

    VALID = "ValidClosedForm"
    INVALID = "Invalid"

    @property
    def valid(self) -> bool:
        return self.tag == self.VALID


def sqrt_kernel(spec: KernelSpec) -> SqrtStatus:
    """Closed-form kernel whose square is ``spec``, when one exists.

    The Gaussian and Laplacian double their length parameter. The IMQ halves
    its exponent and keeps ``2 alpha length_scale**2`` fixed, i.e. the length
    scale grows by sqrt(2). A sum of Gaussians has no such square root.
    """
    fam, p = spec.family, spec.params
    if fam == GAUSSIAN:
        return SqrtStatus(SqrtStatus.VALID, gaussian(2.0 * p[0]))
    if fam == LAPLACIAN:
        return SqrtStatus(SqrtStatus.VALID, laplacian(2.0 * p[0]))
    if fam == IMQ:
        ls, alpha = p
        return SqrtStatus(SqrtStatus.VALID, imq(ls * math.sqrt(2.0), alpha / 2.0))
    return SqrtStatus(SqrtStatus.INVALID)


def sqrt_scale_factor(spec: KernelSpec) -> float:
    """d(sqrt_spec.params[0]) / d(spec.params[0])."""
    return {GAUSSIAN: 2.0, LAPLACIAN: 2.0, IMQ: math.sqrt(2.0)}[spec.family]


def normalize_kernel(spec: KernelSpec) -> KernelSpec:
    if spec.family != MIXTURE:
        return spec
    total = spec.diagonal
    return mixture([(w / total, ls) for w, ls in spec.components])


def median_heuristic(points, fraction: float = 0.5) -> float:
    """``fraction`` times the median pairwise Euclidean distance.

    Point sets larger than 2048 rows are subsampled with a fixed seed.
    """
    data = as_pointset(points).data
    if data.shape[0] < 2:
        raise TooFewPoints("median heuristic needs at least two points")
    if fraction <= 0:
        raise ValueError("fraction must be > 0")
    if data.shape[0] > MEDIAN_SUBSAMPLE:
        rng = np.random.default_rng(MEDIAN_SEED)
        data = data[np.sort(rng.choice(data.shape[0], MEDIAN_SUBSAMPLE, replace=False))]
    return fraction * float(np.median(pdist(data)))


def default_fit_grid(spec: KernelSpec, size: int = 512) -> np.ndarray:
    # sigma_k = sqrt(length_scale_k / 2) under exp(-r^2 / (2 sigma^2))
    max_sigma = max(math.sqrt(ls / 2.0) for _, ls in spec.components)
    return np.linspace(0.0, 3.0 * max_sigma, size)


@dataclass(frozen=True)
class IMQFit:
    spec: KernelSpec
    rmse: float
    max_abs_error: float


def fit_imq_to_mixture(
    mixture_spec: KernelSpec,
    distance_grid: Sequence[float] | None = None,
    alpha_bounds: tuple[float, float] = (1e-3, 1e6),
    xtol: float = 1e-8,
) -> IMQFit:
    """Least-squares fit of a generalized IMQ to a normalized Gaussian mixture.

    The error is measured on kernel values over ``distance_grid``. For each
    exponent the best denominator ``2 alpha length_scale**2`` is found by a
    bounded scalar search; the exponent is searched the same way in log space.
    """
    if mixture_spec.family != MIXTURE:
        raise ValueError("fit_imq_to_mixture needs a mixture kernel")
    target_spec = normalize_kernel(mixture_spec)
    grid = default_fit_grid(target_spec) if distance_grid is None else distance_grid
    grid = np.asarray(grid, dtype=np.float64).ravel()
    if grid.size == 0:
        raise BadGrid("distance grid is empty")
    if not np.all(np.isfinite(grid)) or np.any(grid < 0) or not np.any(grid > 0):
        raise BadGrid("distance grid must be finite, non-negative and not all zero")

    r2 = grid * grid
    target = kernel_from_sqdist(target_spec, r2)
    rmax2 = float(r2.max())

    def sse(log_denom, alpha):
        f = (1.0 + r2 / math.exp(log_denom)) ** (-alpha)
        return float(np.sum((f - target) ** 2))

    lo_d, hi_d = math.log(rmax2 * 1e-8), math.log(rmax2 * 1e8)

    def best_denom(alpha):
        res = minimize_scalar(
            sse, args=(alpha,), bounds=(lo_d, hi_d), method="bounded", options={"xatol": xtol}
        )
        return res.x, res.fun

    res = minimize_scalar(
        lambda la: best_denom(math.exp(la))[1],
        bounds=(math.log(alpha_bounds[0]), math.log(alpha_bounds[1])),
        method="bounded",
        options={"xatol": xtol},
    )
    alpha = math.exp(res.x)
    log_denom, err = best_denom(alpha)
    length_scale = math.sqrt(math.exp(log_denom) / (2.0 * alpha))
    spec = imq(length_scale, alpha)
    resid = kernel_from_sqdist(spec, r2) - target
    return IMQFit(spec, math.sqrt(err / grid.size), float(np.max(np.abs(resid))))
