"""Compiled Elman recursion kernels over packed sequence batches.

A packed batch stores ``S`` sequences back to back in one ``(N, H)`` array;
``offsets`` has ``S + 1`` entries and sequence ``s`` occupies rows
``offsets[s]:offsets[s + 1]``.  The input projection ``X @ W.T + b`` is done
by the caller with BLAS, so only the recurrent part lives here.
"""
import numpy as np
from libc.math cimport exp


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def recur_forward(const double[:, ::1] zin, const long long[::1] offsets,
                  const double[:, ::1] V, bint reverse):
    """Hidden states ``h_t = sigmoid(zin_t + V h_prev)`` with ``h_0 = 0``."""
    cdef Py_ssize_t N = zin.shape[0]
    cdef Py_ssize_t H = zin.shape[1]
    cdef Py_ssize_t S = offsets.shape[0] - 1
    out = np.empty((N, H), dtype=np.float64)
    # Column-major V so the inner loop is a contiguous axpy.
    VT_arr = np.ascontiguousarray(np.asarray(V).T)
    acc_arr = np.empty(H, dtype=np.float64)
    cdef double[:, ::1] hs = out
    cdef const double[:, ::1] VT = VT_arr
    cdef double[::1] acc = acc_arr
    cdef Py_ssize_t s, k, t, prev, i, j, start, stop
    cdef double hj
    with nogil:
        for s in range(S):
            start = offsets[s]
            stop = offsets[s + 1]
            for k in range(stop - start):
                if reverse:
                    t = stop - 1 - k
                    prev = t + 1
                else:
                    t = start + k
                    prev = t - 1
                for i in range(H):
                    acc[i] = 0.0
                if k > 0:
                    for j in range(H):
                        hj = hs[prev, j]
                        for i in range(H):
                            acc[i] = acc[i] + VT[j, i] * hj
                for i in range(H):
                    hs[t, i] = _sigmoid(zin[t, i] + acc[i])
    return out


def recur_backward(const double[:, ::1] hs, const double[:, ::1] dhs,
                   const long long[::1] offsets, const double[:, ::1] V,
                   bint reverse):
    """Pre-activation gradients ``dz`` given direct gradients on the states.

    ``dhs`` holds dL/dh_t from everything except the recurrence (i.e. the
    pooling layer); the recurrent contribution ``V.T @ dz_next`` is carried
    here, latest-in-recursion step first.
    """
    cdef Py_ssize_t N = hs.shape[0]
    cdef Py_ssize_t H = hs.shape[1]
    cdef Py_ssize_t S = offsets.shape[0] - 1
    out = np.empty((N, H), dtype=np.float64)
    carry_arr = np.empty(H, dtype=np.float64)
    cdef double[:, ::1] dz = out
    cdef double[::1] carry = carry_arr
    cdef Py_ssize_t s, k, t, i, j, start, stop
    cdef double g, h, d
    with nogil:
        for s in range(S):
            start = offsets[s]
            stop = offsets[s + 1]
            for j in range(H):
                carry[j] = 0.0
            for k in range(stop - start):
                if reverse:
                    t = start + k
                else:
                    t = stop - 1 - k
                for i in range(H):
                    h = hs[t, i]
                    g = dhs[t, i] + carry[i]
                    dz[t, i] = g * h * (1.0 - h)
                for j in range(H):
                    carry[j] = 0.0
                for i in range(H):
                    d = dz[t, i]
                    for j in range(H):
                        carry[j] = carry[j] + V[i, j] * d
    return out


def pool_forward(const double[:, ::1] hs, const long long[::1] offsets,
                 int kind, bint reverse):
    """Pool each sequence; kind 0 = last, 1 = average, 2 = max.

    Returns ``(c, idx)``.  ``idx[s, j]`` is the packed row feeding unit ``j``
    for last and max pooling (earliest row on max ties); unused for average.
    """
    cdef Py_ssize_t H = hs.shape[1]
    cdef Py_ssize_t S = offsets.shape[0] - 1
    c_arr = np.empty((S, H), dtype=np.float64)
    idx_arr = np.zeros((S, H), dtype=np.int64)
    cdef double[:, ::1] c = c_arr
    cdef long long[:, ::1] idx = idx_arr
    cdef Py_ssize_t s, t, j, start, stop, row
    cdef double acc, best
    with nogil:
        for s in range(S):
            start = offsets[s]
            stop = offsets[s + 1]
            if kind == 0:
                row = start if reverse else stop - 1
                for j in range(H):
                    c[s, j] = hs[row, j]
                    idx[s, j] = row
            elif kind == 1:
                for j in range(H):
                    acc = 0.0
                    for t in range(start, stop):
                        acc = acc + hs[t, j]
                    c[s, j] = acc / (stop - start)
            else:
                for j in range(H):
                    best = hs[start, j]
                    row = start
                    for t in range(start + 1, stop):
                        if hs[t, j] > best:
                            best = hs[t, j]
                            row = t
                    c[s, j] = best
                    idx[s, j] = row
    return c_arr, idx_arr
