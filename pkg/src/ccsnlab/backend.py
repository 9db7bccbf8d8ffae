"""Kernel backend selection.

Hot inner loops (moment integration, covariance assembly, lag-kernel
evaluation) are compiled with numba when available.  Setting the
environment variable ``CCSN_NO_NUMBA=1`` before import selects the pure
numpy/python fallback path instead; results are identical, only slower.
``benchmarks/bench_backends.py`` times both paths.
"""

import os

NUMBA_ENABLED = os.environ.get("CCSN_NO_NUMBA", "0").lower() not in ("1", "true", "yes")

if NUMBA_ENABLED:
    # the default TBB layer is version-sensitive; workqueue is always present
    # and our parallel regions are coarse-grained
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):
        """No-op replacement for numba.njit."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap

    prange = range


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"


__all__ = ["njit", "prange", "NUMBA_ENABLED", "backend_name"]
