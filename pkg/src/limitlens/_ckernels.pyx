# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled weighted-length kernels: the hot loop of archive ingestion."""

import numpy as np

BACKEND = "c"


def build_table(light_ranges, default_weight):
    starts = np.array([lo for lo, _ in light_ranges], dtype=np.int64)
    ends = np.array([hi for _, hi in light_ranges], dtype=np.int64)
    return starts, ends, int(default_weight)


cdef inline long _weight(long cp, const long long[::1] starts,
                         const long long[::1] ends, long default_weight) noexcept:
    cdef Py_ssize_t lo = 0, hi = starts.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if starts[mid] <= cp:
            lo = mid + 1
        else:
            hi = mid
    if lo > 0 and cp <= ends[lo - 1]:
        return 1
    return default_weight


cdef long _count(str text, const long long[::1] starts,
                 const long long[::1] ends, long default_weight):
    cdef Py_UCS4 ch
    cdef long total = 0
    if starts.shape[0] == 0:
        return len(text) * default_weight
    for ch in text:
        total += _weight(<long>ch, starts, ends, default_weight)
    return total


def weighted_length(str text, table):
    starts, ends, default_weight = table
    return _count(text, starts, ends, default_weight)


def weighted_lengths(list texts, table):
    starts, ends, default_weight = table
    cdef const long long[::1] s = starts
    cdef const long long[::1] e = ends
    cdef long dw = default_weight
    out = np.empty(len(texts), dtype=np.int64)
    cdef long long[::1] view = out
    cdef Py_ssize_t i
    for i in range(len(texts)):
        view[i] = _count(texts[i], s, e, dw)
    return out
