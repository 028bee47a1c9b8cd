"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Accumulation order in ``weighted_sum`` and ``weighted_variance`` follows the
compiled loops term by term, so both backends agree bit for bit there.
``segment_reduce`` may differ from the compiled mean in the last ulp.
"""

import numpy as np


def weighted_sum(weights, samples, offset):
    acc = np.zeros(samples.shape[1], dtype=np.float64)
    for w, row in zip(weights, samples):
        acc = acc + w * row
    acc = acc + offset
    clamped = int(np.count_nonzero((acc < 0.0) | (acc > 1.0)))
    return np.clip(acc, 0.0, 1.0), clamped


def weighted_variance(weights, variances, cov):
    n = len(weights)
    cross = 0.0
    for i in range(n):
        for k in range(i + 1, n):
            cross = cross + weights[i] * weights[k] * cov[i, k]
    cross = 2.0 * cross

    acc = np.zeros(variances.shape[1], dtype=np.float64)
    for w, row in zip(weights, variances):
        acc = acc + w * w * row
    acc = acc + cross
    clamped = int(np.count_nonzero(acc < 0.0))
    return np.maximum(acc, 0.0), clamped


def segment_reduce(values, starts, mode):
    starts = np.asarray(starts, dtype=np.intp)
    if len(starts) < 2:
        return np.empty(0, dtype=np.float64)
    heads = starts[:-1]
    counts = np.diff(starts)
    if mode == 0:
        return np.add.reduceat(values, heads) / counts
    if mode == 1:
        return np.maximum.reduceat(values, heads)
    pos = 0.95 * (counts - 1)
    lo = pos.astype(np.intp)
    frac = pos - lo
    hi = np.minimum(lo + 1, counts - 1)
    a = values[heads + lo]
    b = values[heads + hi]
    return a + frac * (b - a)
