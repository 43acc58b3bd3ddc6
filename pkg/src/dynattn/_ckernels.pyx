# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same signatures and semantics as ``_pykernels``."""
import numpy as np
from libc.math cimport expm1, isfinite


def query_entry(const double[:, ::1] C, const double[::1] s,
                const double[:, ::1] a_stack, const double[:, ::1] b_stack, Py_ssize_t ct_k,
                const double[:, ::1] A, const long long[::1] v_row, const long long[::1] v_col,
                const double[::1] v_delta, Py_ssize_t ct_v,
                Py_ssize_t i, Py_ssize_t j, bint normalize, counts):
    cdef double total = C[i, j]
    cdef Py_ssize_t t
    cdef Py_ssize_t hit = 0
    for t in range(ct_k):
        total += a_stack[i, t] * b_stack[t, j]
    for t in range(ct_v):
        if v_col[t] == j:
            total += A[i, v_row[t]] * v_delta[t]
            hit += 1
    if counts is not None:
        counts[0] += ct_k + hit + (1 if normalize else 0)
        counts[1] += ct_k + hit
    if normalize:
        return total / s[i]
    return total


def k_column(const double[:, ::1] Q, const double[:, ::1] M, const double[:, ::1] A,
             Py_ssize_t i, Py_ssize_t j, double delta,
             double[::1] new_m, double[::1] new_a, double[::1] d_a, counts):
    cdef Py_ssize_t n = Q.shape[0]
    cdef Py_ssize_t r
    cdef bint ok = True
    cdef double dm
    for r in range(n):
        dm = delta * Q[r, j]
        new_m[r] = M[r, i] + dm
        d_a[r] = A[r, i] * expm1(dm)
        new_a[r] = A[r, i] + d_a[r]
        if not (isfinite(new_a[r]) and isfinite(d_a[r])):
            ok = False
    if counts is not None:
        counts[0] += 3 * n
        counts[1] += 2 * n
    return ok


def bool_matmul(const unsigned char[:, ::1] X, const unsigned char[:, ::1] Y):
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1], p = Y.shape[1]
    out = np.zeros((n, p), dtype=np.uint8)
    cdef unsigned char[:, ::1] o = out
    cdef Py_ssize_t r, c, k
    for r in range(n):
        for c in range(p):
            for k in range(m):
                if X[r, k] and Y[k, c]:
                    o[r, c] = 1
                    break
    return out
