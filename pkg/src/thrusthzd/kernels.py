"""Backend selection for the hot kernels.

The compiled extension is used when it was built; setting
``THRUSTHZD_PURE_PYTHON=1`` forces the numpy reference implementation.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("THRUSTHZD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py

pinned_terms = _impl.pinned_terms
closed_loop = _impl.closed_loop
bezier = _kernels_py.bezier


def backend_module(name: str):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
