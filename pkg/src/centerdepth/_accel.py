"""Numba switch.

Set ``CENTERDEPTH_DISABLE_NUMBA=1`` to run every hot kernel through its
pure-numpy twin instead of the compiled one.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get(
    "CENTERDEPTH_DISABLE_NUMBA", ""
).strip().lower() not in ("1", "true", "yes", "on")


def njit(func):
    if NUMBA_AVAILABLE:
        return numba.njit(cache=True)(func)
    return func
