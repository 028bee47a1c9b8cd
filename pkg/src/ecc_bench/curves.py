"""Sampled efficiency and variance curves over utilization in [0, 1].

Curves live on the uniform grid ``{0, 1/M, ..., 1}`` and are evaluated by
piecewise-linear interpolation. All curve objects are immutable.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import MismatchedGridError, WeightSumError

DEFAULT_RESOLUTION = 100
WEIGHT_TOL = 1e-9
_GRID_SNAP = 1e-9


def check_utilization(u: float) -> float:
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"utilization must lie in [0, 1], got {u!r}")
    return u


class _SampledCurve:
    __slots__ = ("_samples",)

    def __init__(self, samples):
        arr = np.array(samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("a curve needs at least two samples (M >= 1)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("curve samples must be finite")
        self._check(arr)
        arr.setflags(write=False)
        self._samples = arr

    def _check(self, arr):
        pass

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def resolution(self) -> int:
        return self._samples.size - 1

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.resolution + 1)

    @classmethod
    def constant(cls, value: float, resolution: int = DEFAULT_RESOLUTION):
        return cls(np.full(resolution + 1, float(value)))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray],
                      resolution: int = DEFAULT_RESOLUTION):
        grid = np.linspace(0.0, 1.0, resolution + 1)
        return cls(np.asarray(fn(grid), dtype=np.float64))

    def evaluate(self, u: float) -> float:
        return evaluate(self, u)

    __call__ = evaluate

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return np.array_equal(self._samples, other._samples)

    def __hash__(self):
        return hash((type(self).__name__, self._samples.tobytes()))

    def __repr__(self):
        return f"{type(self).__name__}(M={self.resolution})"

    def tolist(self) -> list:
        return self._samples.tolist()


class EfficiencyCurve(_SampledCurve):
    """Normalized energy efficiency as a function of utilization."""

    __slots__ = ()

    def _check(self, arr):
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("efficiency samples must lie in [0, 1]")


class VarianceCurve(_SampledCurve):
    """Variance of the efficiency estimate as a function of utilization."""

    __slots__ = ()

    def _check(self, arr):
        if arr.min() < 0.0:
            raise ValueError("variance samples must be non-negative")


def evaluate(curve: _SampledCurve, u: float) -> float:
    """Linearly interpolate ``curve`` at utilization ``u``.

    Grid points return the stored sample exactly.
    """
    u = check_utilization(u)
    m = curve.resolution
    pos = u * m
    idx = int(round(pos))
    s = curve.samples
    if abs(pos - idx) <= _GRID_SNAP:
        return float(s[idx])
    lo = int(np.floor(pos))
    frac = pos - lo
    return float(s[lo] + frac * (s[lo + 1] - s[lo]))


def argmax_utilization(curve: _SampledCurve) -> float:
    """Grid utilization with the highest sample; ties go to the lowest utilization."""
    idx = int(np.argmax(curve.samples))  # first occurrence
    return idx / curve.resolution


def _check_grid(curves: Sequence[_SampledCurve]) -> int:
    resolutions = {c.resolution for c in curves}
    if len(resolutions) != 1:
        raise MismatchedGridError(f"curves have differing resolutions {sorted(resolutions)}")
    return resolutions.pop()


def _check_weights(weights: np.ndarray) -> None:
    if np.any(weights < 0.0) or np.any(weights > 1.0):
        raise WeightSumError(f"weights must lie in [0, 1], got {weights.tolist()}")
    total = float(np.sum(weights))
    if abs(total - 1.0) > WEIGHT_TOL:
        raise WeightSumError(f"weights sum to {total!r}, expected 1")


def linear_combine(children, epsilon: float = 0.0):
    """Weighted sum of child efficiency curves plus a scalar offset.

    Parameters
    ----------
    children : sequence of (weight, EfficiencyCurve)
    epsilon : float
        Offset for contributions not covered by the children.

    Returns
    -------
    curve : EfficiencyCurve
        Result clamped into [0, 1].
    clamped : int
        Number of grid points that had to be clamped.
    """
    children = list(children)
    if not children:
        raise WeightSumError("at least one child is required")
    curves = [c for _, c in children]
    _check_grid(curves)
    weights = np.array([float(w) for w, _ in children])
    _check_weights(weights)
    stacked = np.ascontiguousarray(np.vstack([c.samples for c in curves]))
    out, clamped = kernels.weighted_sum(weights, stacked, float(epsilon))
    return EfficiencyCurve(out), int(clamped)


def raw_linear_combine(children, epsilon: float = 0.0) -> np.ndarray:
    """Unclamped weighted sum; used for calibration and diagnostics."""
    out = np.zeros(children[0][1].resolution + 1)
    for w, c in children:
        out = out + float(w) * c.samples
    return out + epsilon


def combine_variance(children, covariances=None):
    """Variance of a weighted sum of correlated efficiency estimates.

    ``covariances`` is anything with ``get(a_index, b_index)`` semantics: a
    square matrix indexed like ``children``, a mapping from index pairs to
    scalars, or None for independent children. Returns ``(VarianceCurve,
    clamped)`` where ``clamped`` counts grid points floored at zero.
    """
    children = list(children)
    if not children:
        raise WeightSumError("at least one child is required")
    curves = [c for _, c in children]
    _check_grid(curves)
    weights = np.array([float(w) for w, _ in children])
    _check_weights(weights)
    n = len(children)
    cov = np.zeros((n, n))
    if covariances is None:
        pass
    elif isinstance(covariances, np.ndarray):
        cov[:] = covariances
    else:
        for (i, k), value in covariances.items():
            cov[i, k] = cov[k, i] = float(value)
    stacked = np.ascontiguousarray(np.vstack([c.samples for c in curves]))
    out, clamped = kernels.weighted_variance(weights, stacked, np.ascontiguousarray(cov))
    return VarianceCurve(out), int(clamped)
