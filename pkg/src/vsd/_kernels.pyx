# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: edit distances and weighted Hamming mismatches."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef Py_ssize_t _lev(const cnp.int64_t[:] a, const cnp.int64_t[:] b, Py_ssize_t* row) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i, j, prev, cur, best
    for j in range(m + 1):
        row[j] = j
    for i in range(1, n + 1):
        prev = row[0]
        row[0] = i
        for j in range(1, m + 1):
            cur = row[j]
            best = prev + (0 if a[i - 1] == b[j - 1] else 1)
            if row[j] + 1 < best:
                best = row[j] + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
            prev = cur
    return row[m]


def levenshtein(const cnp.int64_t[:] a, const cnp.int64_t[:] b):
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((b.shape[0] + 1) * sizeof(Py_ssize_t))
    if row == NULL:
        raise MemoryError()
    try:
        return _lev(a, b, row)
    finally:
        free(row)


def pairwise_levenshtein(const cnp.int64_t[:, :] batch):
    """Symmetric matrix of edit distances between the rows of ``batch``."""
    cdef Py_ssize_t n = batch.shape[0], m = batch.shape[1]
    cdef Py_ssize_t i, j, d
    out = np.zeros((n, n), dtype=np.int64)
    cdef cnp.int64_t[:, :] o = out
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((m + 1) * sizeof(Py_ssize_t))
    if row == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                for j in range(i + 1, n):
                    d = _lev(batch[i], batch[j], row)
                    o[i, j] = d
                    o[j, i] = d
    finally:
        free(row)
    return out


def weighted_mismatch(const cnp.int64_t[:, ::1] x, const cnp.int64_t[:, ::1] y,
                      const double[::1] w):
    """``out[i, j] = sum_m w[m] * (x[i, m] != y[j, m])``."""
    cdef Py_ssize_t n = x.shape[0], k = y.shape[0], m = x.shape[1]
    cdef Py_ssize_t i, j, p, j0, j1
    cdef Py_ssize_t block = 256
    cdef cnp.int64_t xv
    cdef double wp
    cdef double* orow
    cdef const cnp.int64_t* ycol
    out = np.zeros((n, k), dtype=np.float64)
    if n == 0 or k == 0 or m == 0:
        return out
    # position-major copy of y so the inner loop runs over contiguous columns
    yt_arr = np.ascontiguousarray(np.asarray(y).T)
    cdef const cnp.int64_t[:, ::1] yt = yt_arr
    cdef double[:, ::1] o = out
    with nogil:
        # tile over columns so each tile of yt stays in cache across rows
        j0 = 0
        while j0 < k:
            j1 = min(j0 + block, k)
            for i in range(n):
                orow = &o[i, 0]
                for p in range(m):
                    xv = x[i, p]
                    wp = w[p]
                    ycol = &yt[p, 0]
                    for j in range(j0, j1):
                        if ycol[j] != xv:
                            orow[j] += wp
            j0 = j1
    return out
