# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the numeric hot kernels.

Same contract as setrank._kernels_py: C-contiguous float64 2-D arrays in,
fresh arrays out.  The wins over NumPy at ranking-sized matrices (tens of
rows) come from fused single-pass loops and the absence of dispatch and
temporary allocations, not from beating BLAS on large matrices.
"""

import numpy as np

from libc.math cimport exp, sqrt

name = "native"


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[1]
    out = np.zeros((n, m))
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, p
    cdef double aip
    for i in range(n):
        for p in range(k):
            aip = a[i, p]
            for j in range(m):
                c[i, j] += aip * b[p, j]
    return out


def matmul_nt(const double[:, ::1] a, const double[:, ::1] b):
    """a @ b.T  (a: [n, k], b: [m, k]) -> [n, m]."""
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[0]
    out = np.empty((n, m))
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, p
    cdef double s
    for i in range(n):
        for j in range(m):
            s = 0.0
            for p in range(k):
                s += a[i, p] * b[j, p]
            c[i, j] = s
    return out


def matmul_tn(const double[:, ::1] a, const double[:, ::1] b):
    """a.T @ b  (a: [k, n], b: [k, m]) -> [n, m]."""
    cdef Py_ssize_t k = a.shape[0], n = a.shape[1], m = b.shape[1]
    out = np.zeros((n, m))
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, p
    cdef double api
    for p in range(k):
        for i in range(n):
            api = a[p, i]
            for j in range(m):
                c[i, j] += api * b[p, j]
    return out


def row_softmax(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    out = np.empty((n, m))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double hi, s
    for i in range(n):
        hi = x[i, 0]
        for j in range(1, m):
            if x[i, j] > hi:
                hi = x[i, j]
        s = 0.0
        for j in range(m):
            y[i, j] = exp(x[i, j] - hi)
            s += y[i, j]
        for j in range(m):
            y[i, j] /= s
    return out


def row_softmax_grad(const double[:, ::1] y, const double[:, ::1] gy):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1]
    out = np.empty((n, m))
    cdef double[:, ::1] gx = out
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(n):
        dot = 0.0
        for j in range(m):
            dot += y[i, j] * gy[i, j]
        for j in range(m):
            gx[i, j] = y[i, j] * (gy[i, j] - dot)
    return out


def layer_norm(const double[:, ::1] x, const double[:, ::1] gain,
               const double[:, ::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    y_out = np.empty((n, m))
    xhat_out = np.empty((n, m))
    inv_out = np.empty((n, 1))
    cdef double[:, ::1] y = y_out
    cdef double[:, ::1] xhat = xhat_out
    cdef double[:, ::1] inv = inv_out
    cdef Py_ssize_t i, j
    cdef double mean, var, d, r
    for i in range(n):
        mean = 0.0
        for j in range(m):
            mean += x[i, j]
        mean /= m
        var = 0.0
        for j in range(m):
            d = x[i, j] - mean
            var += d * d
        var /= m
        r = 1.0 / sqrt(var + eps)
        inv[i, 0] = r
        for j in range(m):
            xhat[i, j] = (x[i, j] - mean) * r
            y[i, j] = xhat[i, j] * gain[0, j] + bias[0, j]
    return y_out, xhat_out, inv_out


def layer_norm_grad(const double[:, ::1] xhat, const double[:, ::1] inv_std,
                    const double[:, ::1] gain, const double[:, ::1] gy):
    cdef Py_ssize_t n = xhat.shape[0], m = xhat.shape[1]
    gx_out = np.empty((n, m))
    ggain_out = np.zeros((1, m))
    gbias_out = np.zeros((1, m))
    cdef double[:, ::1] gx = gx_out
    cdef double[:, ::1] ggain = ggain_out
    cdef double[:, ::1] gbias = gbias_out
    cdef Py_ssize_t i, j
    cdef double m1, m2, gh
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(m):
            gbias[0, j] += gy[i, j]
            ggain[0, j] += gy[i, j] * xhat[i, j]
            gh = gy[i, j] * gain[0, j]
            m1 += gh
            m2 += gh * xhat[i, j]
        m1 /= m
        m2 /= m
        for j in range(m):
            gh = gy[i, j] * gain[0, j]
            gx[i, j] = (gh - m1 - xhat[i, j] * m2) * inv_std[i, 0]
    return gx_out, ggain_out, gbias_out


def relu(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    out = np.empty((n, m))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            y[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out


def relu_grad(const double[:, ::1] x, const double[:, ::1] gy):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    out = np.empty((n, m))
    cdef double[:, ::1] gx = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            gx[i, j] = gy[i, j] if x[i, j] > 0.0 else 0.0
    return out
