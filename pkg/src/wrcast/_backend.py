"""Kernel backend selection.

Imports the compiled extension when available, otherwise the numpy
fallback. WRCAST_PURE_PYTHON=1 forces the fallback (used by the kernel
benchmark and by tests that compare the two implementations).
"""

import os

from . import _kernels_numpy

if os.environ.get("WRCAST_PURE_PYTHON") == "1":
    kernels = _kernels_numpy
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_numpy

BACKEND = kernels.BACKEND


def get_kernels(name=None):
    """Return a kernel module by name ('cython'/'numpy'), default active."""
    if name is None:
        return kernels
    if name == "numpy":
        return _kernels_numpy
    if name == "cython":
        from . import _kernels  # raises ImportError when not built
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
