"""Pick the tree kernel implementation at import time.

The compiled extension is preferred. Set ``HURDLE_UPLIFT_BACKEND=python`` to
force the numpy fallback, or ``=compiled`` to fail loudly when the extension
is missing.
"""

import os
import warnings

from . import _tree_kernels_py as python_kernels

_requested = os.environ.get("HURDLE_UPLIFT_BACKEND", "auto").lower()

try:
    from . import _tree_kernels as compiled_kernels
except ImportError:  # pragma: no cover - depends on build environment
    compiled_kernels = None
    if _requested == "compiled":
        raise

if _requested == "python" or compiled_kernels is None:
    kernels = python_kernels
    BACKEND = "python"
    if compiled_kernels is None and _requested != "python":
        warnings.warn(
            "compiled tree kernels unavailable; using the numpy fallback (slow)",
            RuntimeWarning,
            stacklevel=2,
        )
else:
    kernels = compiled_kernels
    BACKEND = "compiled"


def get_kernels(name=None):
    """Return the kernel module for ``name`` ('compiled' / 'python') or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return python_kernels
    if name == "compiled":
        if compiled_kernels is None:
            raise ImportError("compiled tree kernels are not built")
        return compiled_kernels
    raise ValueError(f"unknown backend {name!r}")
