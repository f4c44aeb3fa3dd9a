"""Optional numba acceleration.

Kernels are written in the subset of numpy that numba compiles, so the same
source runs either compiled or as plain numpy.  Set ``SPHERELAB_NUMBA=0`` to
force the numpy path (numba is also skipped when it is not installed).
"""

import os

_FLAG = os.environ.get("SPHERELAB_NUMBA", "1").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

NUMBA_ENABLED = _numba is not None and _FLAG not in ("0", "false", "no", "off")


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when acceleration is on, identity otherwise."""
    opts = {"cache": True}
    opts.update(kwargs)

    def wrap(f):
        if NUMBA_ENABLED:
            return _numba.njit(**opts)(f)
        return f

    if func is None:
        return wrap
    return wrap(func)


def is_compiled(func) -> bool:
    return NUMBA_ENABLED and hasattr(func, "py_func")
