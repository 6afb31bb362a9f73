"""Backend selection for the hot kernels.

Every hot loop exists twice: a numba ``@njit`` version and a pure-numpy
version.  ``RECSPLIT_BACKEND=numpy`` forces the numpy path; otherwise numba is
used whenever it can be imported.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None

_requested = os.environ.get("RECSPLIT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"RECSPLIT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

DEFAULT_BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def resolve_backend(backend=None):
    """Return the backend name to use for one call."""
    if backend is None:
        return DEFAULT_BACKEND
    backend = backend.lower()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op decorator without numba."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
