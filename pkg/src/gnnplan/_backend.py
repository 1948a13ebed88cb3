"""Kernel backend selection.

Set ``GNNPLAN_BACKEND=numpy`` to run every hot kernel through its pure
numpy / pure Python fallback. The default is ``numba`` when numba imports.
"""
import os

ENV_FLAG = "GNNPLAN_BACKEND"

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None


def _resolve():
    want = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and not HAVE_NUMBA:
        return "numpy"
    return want


BACKEND = _resolve()
USE_NUMBA = BACKEND == "numba"


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it as is."""
    if not HAVE_NUMBA:
        return fn
    return _numba.njit(cache=True)(fn)
