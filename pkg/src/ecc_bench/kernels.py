"""Backend selection for the numeric inner loops.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is loaded. Set ``ECC_BENCH_PURE=1`` to force the fallback.
"""

import os

from . import _kernels_py

MEAN, MAX, P95 = 0, 1, 2

_compiled = None
if os.environ.get("ECC_BENCH_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"

weighted_sum = _impl.weighted_sum
weighted_variance = _impl.weighted_variance
segment_reduce = _impl.segment_reduce


def compiled_available():
    return _compiled is not None


def backends():
    """Map of backend name to kernel module, for equivalence tests and benchmarks."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
