# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense kernels; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def affine_forward(const double[:, ::1] x, const double[:, ::1] W, const double[::1] b):
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1], m = W.shape[0]
    cdef Py_ssize_t r, i, k
    cdef double acc
    out = np.empty((B, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(B):
            for i in range(m):
                acc = 0.0
                for k in range(n):
                    acc = acc + W[i, k] * x[r, k]
                o[r, i] = acc + b[i]
    return out


def affine_backward(const double[:, ::1] g, const double[:, ::1] x,
                    const double[:, ::1] W, double[:, ::1] dW, double[::1] db):
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1], m = W.shape[0]
    cdef Py_ssize_t r, i, k
    cdef double gi
    dx_arr = np.zeros((B, n), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    with nogil:
        for r in range(B):
            for i in range(m):
                gi = g[r, i]
                if gi == 0.0:
                    continue
                db[i] += gi
                for k in range(n):
                    dW[i, k] += gi * x[r, k]
                    dx[r, k] += gi * W[i, k]
    return dx_arr


def relu_forward(const double[:, ::1] x):
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1], r, k
    cdef double v
    out = np.empty((B, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(B):
            for k in range(n):
                v = x[r, k]
                o[r, k] = v if v > 0.0 else 0.0
    return out


def relu_backward(const double[:, ::1] g, const double[:, ::1] y):
    cdef Py_ssize_t B = g.shape[0], n = g.shape[1], r, k
    out = np.empty((B, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(B):
            for k in range(n):
                o[r, k] = g[r, k] if y[r, k] > 0.0 else 0.0
    return out
