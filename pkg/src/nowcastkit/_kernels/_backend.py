"""Backend selection for the compiled kernels.

``NOWCASTKIT_NUMBA=0`` (also ``false``/``no``/``off``) forces the pure-numpy
fallback.  Anything else uses numba's nopython compiler when numba imports
cleanly.  The flag is read once at import time.
"""
from __future__ import annotations

import os


def _numba_enabled() -> bool:
    flag = os.environ.get("NOWCASTKIT_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _numba_enabled()

if USING_NUMBA:
    from numba import njit as _njit

    def jit(func):
        """Compile ``func`` in nopython mode with on-disk caching."""
        return _njit(cache=True)(func)

else:

    def jit(func):
        """Identity decorator: run the kernel source as plain numpy."""
        return func
