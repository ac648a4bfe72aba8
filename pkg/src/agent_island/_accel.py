"""Optional numba acceleration.

Set ``AGENT_ISLAND_DISABLE_NUMBA=1`` to force the pure-numpy kernels even
when numba is installed.
"""

from __future__ import annotations

import os

ENV_FLAG = "AGENT_ISLAND_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - depends on the environment
    numba = None

HAVE_NUMBA = numba is not None


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get(ENV_FLAG, "").strip().lower() not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
