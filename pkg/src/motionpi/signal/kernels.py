"""Select the compiled kernels when available, else the numpy fallback.

Set ``MOTIONPI_PURE=1`` to force the fallback (used by the benchmark and
by the backend-equivalence tests).
"""
import os

from . import _pykernels

BACKEND = "python"
if not os.environ.get("MOTIONPI_PURE"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

enmo = _impl.enmo
bout_reduce = _impl.bout_reduce
window_counts = _impl.window_counts


def available_backends():
    """Return a mapping of backend name to kernel module for every importable backend."""
    found = {"python": _pykernels}
    try:
        from . import _kernels
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
