"""Numeric hot-loop kernels.

The kernels in this package are plain numpy functions compiled with numba's
``@njit`` when available.  Setting the environment variable
``NOWCASTKIT_NUMBA=0`` (or numba being absent) selects the uncompiled
pure-numpy fallback; both paths run the same source and produce identical
results.  See ``benchmarks/bench_kernels.py`` for a timing comparison.
"""

from ._backend import USING_NUMBA

__all__ = ["USING_NUMBA"]
