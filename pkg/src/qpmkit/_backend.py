"""Select the compiled Gram core or the pure-Python fallback at import time.

Set ``QPMKIT_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _gram_py
from .kernels import FAMILIES

try:
    from . import _gram as _ext
except ImportError:  # extension not built
    _ext = None

_FAMILY_CODE = {name: i for i, name in enumerate(FAMILIES)}

AVAILABLE = ("cython", "python") if _ext is not None else ("python",)
if _ext is not None and os.environ.get("QPMKIT_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
else:
    BACKEND = "python"


def _resolve(backend):
    backend = backend or BACKEND
    if backend not in AVAILABLE:
        raise ValueError(f"backend {backend!r} unavailable; have {AVAILABLE}")
    return backend


def gram_matrix(X: np.ndarray, spec, backend: str | None = None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if _resolve(backend) == "cython":
        return _ext.gram_matrix(X, _FAMILY_CODE[spec.family], np.asarray(spec.params), spec.diagonal)
    return _gram_py.gram_matrix(X, spec)


def cross_gram(X: np.ndarray, Y: np.ndarray, spec, backend: str | None = None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if _resolve(backend) == "cython":
        return _ext.cross_gram(X, Y, _FAMILY_CODE[spec.family], np.asarray(spec.params), spec.diagonal)
    return _gram_py.cross_gram(X, Y, spec)
