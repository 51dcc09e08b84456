# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_fallback``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def min_sum(local, g):
    cdef const double[::1] l = np.ascontiguousarray(local, dtype=np.float64)
    cdef const double[::1] q = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t n = l.shape[0], i
    cdef double acc = 0.0, tot = 0.0
    if q.shape[0] != n:
        raise ValueError(f"length mismatch: {n} vs {q.shape[0]}")
    for i in range(n):
        tot += l[i]
        acc += l[i] if l[i] < q[i] else q[i]
    return acc, tot


def lcs_length(a, b):
    cdef const long long[::1] x = np.ascontiguousarray(a, dtype=np.int64)
    cdef const long long[::1] y = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t m = x.shape[0], n = y.shape[0], i, j
    if m == 0 or n == 0:
        return 0
    cdef long long[::1] prev = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] cur = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] tmp
    for i in range(m):
        cur[0] = 0
        for j in range(n):
            if x[i] == y[j]:
                cur[j + 1] = prev[j] + 1
            elif prev[j + 1] >= cur[j]:
                cur[j + 1] = prev[j + 1]
            else:
                cur[j + 1] = cur[j]
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[n])


cdef inline bint _before(const double[::1] key, long long i, long long j) noexcept nogil:
    # merge keeps the left element on ties, so equal scores stay in index order
    return key[i] >= key[j] or key[j] != key[j]


def rank_candidates(scores):
    """Flat indices ordered by score descending, ties by index ascending.

    Bottom-up stable merge sort; comparisons are inlined, unlike libc qsort.
    """
    cdef const double[::1] key = np.ascontiguousarray(scores, dtype=np.float64).ravel()
    cdef Py_ssize_t n = key.shape[0], i, width, lo, mid, hi, a, b, k
    out = np.arange(n, dtype=np.int64)
    if n < 2:
        return out
    scratch = np.empty(n, dtype=np.int64)
    cdef long long[::1] src = out
    cdef long long[::1] dst = scratch
    cdef long long[::1] tmp
    cdef bint swapped = False
    with nogil:
        width = 1
        while width < n:
            lo = 0
            while lo < n:
                mid = lo + width if lo + width < n else n
                hi = lo + 2 * width if lo + 2 * width < n else n
                a, b, k = lo, mid, lo
                while a < mid and b < hi:
                    if _before(key, src[a], src[b]):
                        dst[k] = src[a]
                        a += 1
                    else:
                        dst[k] = src[b]
                        b += 1
                    k += 1
                while a < mid:
                    dst[k] = src[a]
                    a += 1
                    k += 1
                while b < hi:
                    dst[k] = src[b]
                    b += 1
                    k += 1
                lo = hi
            tmp = src
            src = dst
            dst = tmp
            swapped = not swapped
            width *= 2
    return scratch if swapped else out
