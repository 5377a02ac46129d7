# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sequential filter kernels.

Mirrors py_ref.py operation for operation; both must produce bit-identical
float64 output. The build disables floating point contraction so a*b+c
rounds the same way the interpreter does.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def levinson(double[::1] r, Py_ssize_t order, double condition=1e-6):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a_arr = np.zeros(order + 1)
    cdef double[::1] a = a_arr
    cdef double[::1] prev = np.empty(order + 1)
    cdef double e, acc, lam
    cdef Py_ssize_t i, j

    a[0] = 1.0
    e = r[0] * (1.0 + condition)
    for i in range(1, order + 1):
        acc = r[i]
        for j in range(1, i):
            acc += a[j] * r[i - j]
        lam = -acc / e
        for j in range(1, i):
            prev[j] = a[j]
        for j in range(1, i):
            a[j] = prev[j] + lam * prev[i - j]
        a[i] = lam
        e *= 1.0 - lam * lam
    return a_arr, e


def levinson_batch(double[:, ::1] rows, Py_ssize_t order, double condition=1e-6):
    cdef Py_ssize_t n = rows.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] coeffs_arr = np.zeros((n, order + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] errors_arr = np.empty(n)
    cdef double[:, ::1] coeffs = coeffs_arr
    cdef double[::1] errors = errors_arr
    cdef double[::1] prev = np.empty(order + 1)
    cdef double e, acc, lam
    cdef Py_ssize_t t, i, j

    for t in range(n):
        coeffs[t, 0] = 1.0
        e = rows[t, 0] * (1.0 + condition)
        for i in range(1, order + 1):
            acc = rows[t, i]
            for j in range(1, i):
                acc += coeffs[t, j] * rows[t, i - j]
            lam = -acc / e
            for j in range(1, i):
                prev[j] = coeffs[t, j]
            for j in range(1, i):
                coeffs[t, j] = prev[j] + lam * prev[i - j]
            coeffs[t, i] = lam
            e *= 1.0 - lam * lam
        errors[t] = e
    return coeffs_arr, errors_arr


def inverse_filter(double[::1] x, double[:, ::1] coeffs,
                   cnp.int64_t[::1] frame_of_sample):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t p = coeffs.shape[1] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef double acc
    cdef Py_ssize_t i, k, kmax, t

    for i in range(n):
        t = frame_of_sample[i]
        acc = 0.0
        kmax = p if p < i else i
        for k in range(kmax + 1):
            acc += coeffs[t, k] * x[i - k]
        out[i] = acc
    return out_arr


def synthesis_filter(double[::1] exc, double[:, ::1] coeffs,
                     cnp.int64_t[::1] frame_of_sample):
    cdef Py_ssize_t n = exc.shape[0]
    cdef Py_ssize_t p = coeffs.shape[1] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y_arr = np.zeros(n)
    cdef double[::1] y = y_arr
    cdef double acc
    cdef Py_ssize_t i, k, kmax, t

    for i in range(n):
        t = frame_of_sample[i]
        acc = exc[i]
        kmax = p if p < i else i
        for k in range(1, kmax + 1):
            acc -= coeffs[t, k] * y[i - k]
        y[i] = acc
    return y_arr
