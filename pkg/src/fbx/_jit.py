"""Numba switch.

Set ``FBX_DISABLE_NUMBA=1`` to run every hot kernel through its pure-numpy
twin instead of the jitted loop version. The flag is read once at import.
"""
import os

_FLAG = os.environ.get("FBX_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")

_settings = {"cache": True, "nogil": True}


def njit(fn):
    """Compile ``fn`` with numba when available, else return it untouched."""
    if HAVE_NUMBA:
        return numba.njit(**_settings)(fn)
    return fn
