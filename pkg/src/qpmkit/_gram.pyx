# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gram-matrix assembly for radial kernels.

Only the upper triangle is evaluated; the lower triangle is a mirror, so the
result is symmetric to the bit.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, pow

cnp.import_array()

DEF GAUSSIAN = 0
DEF LAPLACIAN = 1
DEF IMQ = 2
DEF MIXTURE = 3
DEF TILE = 64


cdef inline double _kernel(double r2, int family, const double* p, Py_ssize_t np_,
                           double diag) noexcept nogil:
    cdef double v = 0.0
    cdef Py_ssize_t k
    if r2 == 0.0:
        return diag
    if family == GAUSSIAN:
        return exp(-r2 / p[0])
    elif family == LAPLACIAN:
        return exp(-sqrt(r2) / p[0])
    elif family == IMQ:
        return pow(1.0 + r2 / (2.0 * p[1] * p[0] * p[0]), -p[1])
    for k in range(0, np_, 2):
        v = v + p[k] * exp(-r2 / p[k + 1])
    return v


def gram_matrix(const double[:, ::1] X, int family, const double[::1] params, double diag):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], npar = params.shape[0]
    cdef Py_ssize_t i, j, k, bi, bj, i_end, j_end, j_start
    cdef double r2, diff, v
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] G = out
    cdef const double* p = &params[0]
    with nogil:
        # square tiles keep the mirrored (column) writes inside cache
        for bi in range(0, n, TILE):
            i_end = min(bi + TILE, n)
            for bj in range(bi, n, TILE):
                j_end = min(bj + TILE, n)
                for i in range(bi, i_end):
                    j_start = i + 1 if bj == bi else bj
                    for j in range(j_start, j_end):
                        r2 = 0.0
                        for k in range(d):
                            diff = X[i, k] - X[j, k]
                            r2 = r2 + diff * diff
                        v = _kernel(r2, family, p, npar, diag)
                        G[i, j] = v
                        G[j, i] = v
        for i in range(n):
            G[i, i] = diag
    return out


def cross_gram(const double[:, ::1] X, const double[:, ::1] Y, int family, const double[::1] params,
               double diag):
    cdef Py_ssize_t n = X.shape[0], m = Y.shape[0], d = X.shape[1], npar = params.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double r2, diff
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] K = out
    cdef const double* p = &params[0]
    with nogil:
        for i in range(n):
            for j in range(m):
                r2 = 0.0
                for k in range(d):
                    diff = X[i, k] - Y[j, k]
                    r2 = r2 + diff * diff
                K[i, j] = _kernel(r2, family, p, npar, diag)
    return out
