# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation hot loops; arithmetic mirrors ``_pure``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, tanh

cnp.import_array()


def gandk_transform(double[::1] z, double a, double b, double g, double k, double c):
    cdef Py_ssize_t n = z.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef double zi
    with nogil:
        for i in range(n):
            zi = z[i]
            o[i] = a + b * (1.0 + c * tanh(0.5 * g * zi)) * pow(1.0 + zi * zi, k) * zi
    return out


def ma2_series(double[::1] e, double t1, double t2):
    cdef Py_ssize_t n = e.shape[0] - 2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t t
    with nogil:
        for t in range(n):
            o[t] = e[t + 2] + t1 * e[t + 1] + t2 * e[t]
    return out


def autocov(double[::1] y, int maxlag):
    cdef Py_ssize_t t_len = y.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(maxlag + 1, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t j, t
    cdef double acc
    with nogil:
        for j in range(maxlag + 1):
            acc = 0.0
            for t in range(j, t_len):
                acc += y[t] * y[t - j]
            o[j] = acc / t_len
    return out
