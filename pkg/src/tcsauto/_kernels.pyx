# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: cosine scan over a float32 matrix and word-level
edit distance over integer token ids.

Both kernels accumulate left to right in double precision so their results
are bit-identical to the pure-Python fallback.
"""

from libc.math cimport sqrt

import numpy as np


def cosine_distances(const float[:, ::1] matrix, const float[::1] query):
    """Return 1 - cos(row, query) for every row of ``matrix`` as float64.

    Rows with zero norm get distance 1.0. The query must have non-zero norm.
    """
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t dim = matrix.shape[1]
    cdef Py_ssize_t i, j
    cdef double dot, rsq, qsq = 0.0, qnorm, sim, x
    if query.shape[0] != dim:
        raise ValueError("query dimension does not match matrix")

    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out

    for j in range(dim):
        qsq = qsq + <double>query[j] * <double>query[j]
    qnorm = sqrt(qsq)

    with nogil:
        for i in range(n):
            dot = 0.0
            rsq = 0.0
            for j in range(dim):
                x = <double>matrix[i, j]
                dot = dot + x * <double>query[j]
                rsq = rsq + x * x
            if rsq == 0.0:
                res[i] = 1.0
                continue
            sim = dot / (qnorm * sqrt(rsq))
            if sim > 1.0:
                sim = 1.0
            elif sim < -1.0:
                sim = -1.0
            res[i] = 1.0 - sim
    return out


def word_edit_distance(const long long[::1] a, const long long[::1] b):
    """Levenshtein distance between two id sequences, unit costs."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, j
    cdef long long sub, best
    if m == 0:
        return n
    if n == 0:
        return m

    prev_arr = np.arange(n + 1, dtype=np.int64)
    cur_arr = np.empty(n + 1, dtype=np.int64)
    cdef long long[::1] prev = prev_arr
    cdef long long[::1] cur = cur_arr
    cdef long long[::1] tmp

    with nogil:
        for i in range(1, m + 1):
            cur[0] = i
            for j in range(1, n + 1):
                sub = prev[j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
                best = prev[j] + 1
                if cur[j - 1] + 1 < best:
                    best = cur[j - 1] + 1
                if sub < best:
                    best = sub
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[n])
