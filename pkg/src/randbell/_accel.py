"""Optional numba acceleration.

Hot kernels come in two flavours: a loop version compiled with numba and a
vectorised numpy version.  ``RANDBELL_DISABLE_NUMBA=1`` (or a missing numba
install) selects the numpy versions everywhere.  Both flavours are always
importable so the test suite can compare them.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("RANDBELL_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")


def njit(func=None, **kwargs):
    """``numba.njit(cache=True, nogil=True)`` or a no-op when numba is absent.

    When numba is installed the loop kernels are always compiled, even if the
    numpy path is selected; the flag only changes which version the public
    functions dispatch to.
    """
    options = {"cache": True, "nogil": True}
    options.update(kwargs)

    def wrap(f):
        if _numba is None:
            return f
        return _numba.njit(**options)(f)

    if func is not None:
        return wrap(func)
    return wrap


def pick(numba_impl, numpy_impl):
    """Return the implementation selected by the environment flag."""
    return numba_impl if USE_NUMBA else numpy_impl
