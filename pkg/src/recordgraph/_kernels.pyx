# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: per-destination softmax, edge aggregation, LCS.

Signatures and semantics match ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def segment_softmax(const double[:, ::1] logits, const long long[::1] indptr):
    cdef Py_ssize_t n_seg = indptr.shape[0] - 1
    cdef Py_ssize_t n_head = logits.shape[1]
    out_arr = np.empty((logits.shape[0], n_head), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t v, e, h, lo, hi
    cdef double m, s
    with nogil:
        for v in range(n_seg):
            lo = indptr[v]
            hi = indptr[v + 1]
            for h in range(n_head):
                m = logits[lo, h]
                for e in range(lo + 1, hi):
                    if logits[e, h] > m:
                        m = logits[e, h]
                s = 0.0
                for e in range(lo, hi):
                    out[e, h] = exp(logits[e, h] - m)
                    s += out[e, h]
                for e in range(lo, hi):
                    out[e, h] /= s
    return out_arr


def segment_softmax_backward(const double[:, ::1] alpha, const double[:, ::1] grad,
                             const long long[::1] indptr):
    cdef Py_ssize_t n_seg = indptr.shape[0] - 1
    cdef Py_ssize_t n_head = alpha.shape[1]
    out_arr = np.empty((alpha.shape[0], n_head), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t v, e, h, lo, hi
    cdef double inner
    with nogil:
        for v in range(n_seg):
            lo = indptr[v]
            hi = indptr[v + 1]
            for h in range(n_head):
                inner = 0.0
                for e in range(lo, hi):
                    inner += alpha[e, h] * grad[e, h]
                for e in range(lo, hi):
                    out[e, h] = alpha[e, h] * (grad[e, h] - inner)
    return out_arr


def gather_aggregate(const long long[::1] indptr, const long long[::1] src,
                     const double[:, ::1] weights, const double[:, :, ::1] values):
    cdef Py_ssize_t n_head = values.shape[0]
    cdef Py_ssize_t n_node = indptr.shape[0] - 1
    cdef Py_ssize_t n_feat = values.shape[2]
    out_arr = np.zeros((n_head, n_node, n_feat), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t h, v, e, f, u
    cdef double w
    with nogil:
        for h in range(n_head):
            for v in range(n_node):
                for e in range(indptr[v], indptr[v + 1]):
                    u = src[e]
                    w = weights[e, h]
                    for f in range(n_feat):
                        out[h, v, f] += w * values[h, u, f]
    return out_arr


def gather_aggregate_backward(const long long[::1] indptr, const long long[::1] src,
                              const double[:, ::1] weights, const double[:, :, ::1] values,
                              const double[:, :, ::1] grad_out):
    cdef Py_ssize_t n_head = values.shape[0]
    cdef Py_ssize_t n_node = indptr.shape[0] - 1
    cdef Py_ssize_t n_feat = values.shape[2]
    gw_arr = np.zeros((weights.shape[0], n_head), dtype=np.float64)
    gv_arr = np.zeros((n_head, values.shape[1], n_feat), dtype=np.float64)
    cdef double[:, ::1] gw = gw_arr
    cdef double[:, :, ::1] gv = gv_arr
    cdef Py_ssize_t h, v, e, f, u
    cdef double w, acc
    with nogil:
        for h in range(n_head):
            for v in range(n_node):
                for e in range(indptr[v], indptr[v + 1]):
                    u = src[e]
                    w = weights[e, h]
                    acc = 0.0
                    for f in range(n_feat):
                        acc += grad_out[h, v, f] * values[h, u, f]
                        gv[h, u, f] += w * grad_out[h, v, f]
                    gw[e, h] = acc
    return gw_arr, gv_arr


def lcs_length(const long long[::1] a, const long long[::1] b):
    if a.shape[0] < b.shape[0]:
        a, b = b, a
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    if m == 0:
        return 0
    prev_arr = np.zeros(m + 1, dtype=np.int64)
    cur_arr = np.zeros(m + 1, dtype=np.int64)
    cdef long long[::1] prev = prev_arr
    cdef long long[::1] cur = cur_arr
    cdef long long[::1] tmp
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            cur[0] = 0
            for j in range(m):
                if a[i] == b[j]:
                    cur[j + 1] = prev[j] + 1
                elif prev[j + 1] >= cur[j]:
                    cur[j + 1] = prev[j + 1]
                else:
                    cur[j + 1] = cur[j]
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[m])
