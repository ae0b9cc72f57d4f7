"""Optional numba acceleration.

Kernels are written once as plain loops and compiled with ``numba.njit``
when numba is importable.  Setting ``ECMTPUT_DISABLE_NUMBA=1`` (or running
without numba installed) routes every dispatcher to the pure-numpy
implementation instead.  The flag is read on every call so tests can flip
it with ``monkeypatch.setenv``.
"""
import os

ENV_FLAG = "ECMTPUT_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def njit(func):
    """Compile ``func`` lazily with numba, or return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def use_numba():
    if not HAVE_NUMBA:
        return False
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")
