# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled element condensation kernels.

Same contracts as ``dpglab.kernels._fallback``.
"""
import numpy as np

from libc.math cimport sqrt

from dpglab.kernels.errors import LocalFactorizationError


cdef int _cholesky(double[:, ::1] L, Py_ssize_t m) noexcept nogil:
    """In-place lower Cholesky; returns -1 on success or the failing pivot."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(m):
        s = L[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0):
            return <int>j
        L[j, j] = sqrt(s)
        for i in range(j + 1, m):
            s = L[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    return -1


cdef void _forward(double[:, ::1] L, double* x, Py_ssize_t m, Py_ssize_t stride) noexcept nogil:
    """Solve L y = x in place for a strided column x."""
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(m):
        s = x[i * stride]
        for k in range(i):
            s -= L[i, k] * x[k * stride]
        x[i * stride] = s / L[i, i]


def condense(double[:, :, ::1] G, double[::1] B, long[::1] t, double[:, ::1] F):
    cdef Py_ssize_t ne = G.shape[0], m = G.shape[1]
    cdef Py_ssize_t e, i, j, k, te
    cdef Py_ssize_t boff = 0, aoff = 0, roff = 0
    cdef Py_ssize_t atotal = 0, rtotal = 0
    for e in range(ne):
        atotal += t[e] * t[e]
        rtotal += t[e]
    A_out = np.empty(atotal)
    r_out = np.empty(rtotal)
    cdef double[::1] A = A_out
    cdef double[::1] r = r_out
    cdef double[:, ::1] L = np.empty((m, m))
    cdef double[::1] z = np.empty(m)
    cdef double[::1] Y = np.empty(m * max(1, int(np.asarray(t).max()) if ne else 1))
    cdef int piv
    cdef double s
    for e in range(ne):
        te = t[e]
        with nogil:
            for i in range(m):
                for j in range(i + 1):
                    L[i, j] = G[e, i, j]
            piv = _cholesky(L, m)
        if piv >= 0:
            raise LocalFactorizationError(int(e), int(piv))
        with nogil:
            for i in range(m * te):
                Y[i] = B[boff + i]
            for j in range(te):
                _forward(L, &Y[j], m, te)
            for i in range(m):
                z[i] = F[e, i]
            _forward(L, &z[0], m, 1)
            for i in range(te):
                for j in range(i, te):
                    s = 0.0
                    for k in range(m):
                        s += Y[k * te + i] * Y[k * te + j]
                    A[aoff + i * te + j] = s
                    A[aoff + j * te + i] = s
                s = 0.0
                for k in range(m):
                    s += Y[k * te + i] * z[k]
                r[roff + i] = s
        boff += m * te
        aoff += te * te
        roff += te
    return A_out, r_out


def dual_norms_sq(double[:, :, ::1] G, double[:, ::1] R):
    cdef Py_ssize_t ne = G.shape[0], m = G.shape[1]
    cdef Py_ssize_t e, i, j
    out_arr = np.empty(ne)
    cdef double[::1] out = out_arr
    cdef double[:, ::1] L = np.empty((m, m))
    cdef double[::1] z = np.empty(m)
    cdef int piv
    cdef double s
    for e in range(ne):
        with nogil:
            for i in range(m):
                for j in range(i + 1):
                    L[i, j] = G[e, i, j]
            piv = _cholesky(L, m)
        if piv >= 0:
            raise LocalFactorizationError(int(e), int(piv))
        with nogil:
            for i in range(m):
                z[i] = R[e, i]
            _forward(L, &z[0], m, 1)
            s = 0.0
            for i in range(m):
                s += z[i] * z[i]
            out[e] = s
    return out_arr
