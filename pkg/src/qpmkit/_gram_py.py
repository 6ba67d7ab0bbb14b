"""Pure numpy/scipy Gram assembly, used when the compiled core is missing."""
import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .kernels import kernel_from_sqdist


def gram_matrix(X: np.ndarray, spec) -> np.ndarray:
    n = X.shape[0]
    diag = float(kernel_from_sqdist(spec, 0.0))
    if n == 1:
        return np.full((1, 1), diag)
    # pdist covers the strict upper triangle only; squareform mirrors it
    G = squareform(kernel_from_sqdist(spec, pdist(X, "sqeuclidean")), checks=False)
    np.fill_diagonal(G, diag)
    return G


def cross_gram(X: np.ndarray, Y: np.ndarray, spec) -> np.ndarray:
    return kernel_from_sqdist(spec, cdist(X, Y, "sqeuclidean"))
