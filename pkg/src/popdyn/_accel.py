"""Numba switch.

Setting ``POPDYN_NO_NUMBA=1`` before import makes every accelerated entry
point dispatch to its pure-numpy twin. The njit kernels are never compiled
in that mode, so numba does not even need to import cleanly.
"""

import os

USE_NUMBA = os.environ.get("POPDYN_NO_NUMBA", "").strip().lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
