# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Must stay numerically identical to _kernels_py."""

import numpy as np


def weighted_sum(const double[::1] weights, const double[:, ::1] samples, double offset):
    cdef Py_ssize_t nchild = samples.shape[0]
    cdef Py_ssize_t npts = samples.shape[1]
    cdef Py_ssize_t i, j
    cdef Py_ssize_t clamped = 0
    cdef double acc
    out = np.empty(npts, dtype=np.float64)
    cdef double[::1] res = out

    for j in range(npts):
        acc = 0.0
        for i in range(nchild):
            acc = acc + weights[i] * samples[i, j]
        acc = acc + offset
        if acc < 0.0:
            acc = 0.0
            clamped += 1
        elif acc > 1.0:
            acc = 1.0
            clamped += 1
        res[j] = acc
    return out, clamped


def weighted_variance(const double[::1] weights, const double[:, ::1] variances,
                      const double[:, ::1] cov):
    cdef Py_ssize_t nchild = variances.shape[0]
    cdef Py_ssize_t npts = variances.shape[1]
    cdef Py_ssize_t i, k, j
    cdef Py_ssize_t clamped = 0
    cdef double cross = 0.0
    cdef double acc
    out = np.empty(npts, dtype=np.float64)
    cdef double[::1] res = out

    for i in range(nchild):
        for k in range(i + 1, nchild):
            cross = cross + weights[i] * weights[k] * cov[i, k]
    cross = 2.0 * cross

    for j in range(npts):
        acc = 0.0
        for i in range(nchild):
            acc = acc + weights[i] * weights[i] * variances[i, j]
        acc = acc + cross
        if acc < 0.0:
            acc = 0.0
            clamped += 1
        res[j] = acc
    return out, clamped


def segment_reduce(const double[::1] values, const Py_ssize_t[::1] starts, int mode):
    """Reduce contiguous segments of ``values``.

    ``starts`` holds segment offsets plus a final sentinel equal to len(values).
    Each segment must be sorted ascending when ``mode`` is 2 (p95).
    mode: 0 mean, 1 max, 2 p95 (linear interpolation between order statistics).
    """
    cdef Py_ssize_t nseg = starts.shape[0] - 1
    cdef Py_ssize_t s, i, lo, n
    cdef double acc, pos, frac
    out = np.empty(nseg, dtype=np.float64)
    cdef double[::1] res = out

    for s in range(nseg):
        n = starts[s + 1] - starts[s]
        if mode == 0:
            acc = 0.0
            for i in range(starts[s], starts[s + 1]):
                acc = acc + values[i]
            res[s] = acc / n
        elif mode == 1:
            acc = values[starts[s]]
            for i in range(starts[s] + 1, starts[s + 1]):
                if values[i] > acc:
                    acc = values[i]
            res[s] = acc
        else:
            pos = 0.95 * (n - 1)
            lo = <Py_ssize_t>pos
            frac = pos - lo
            if lo + 1 < n:
                res[s] = values[starts[s] + lo] + frac * (values[starts[s] + lo + 1] - values[starts[s] + lo])
            else:
                res[s] = values[starts[s] + lo]
    return out
