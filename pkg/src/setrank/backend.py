"""Kernel backend selection.

At import time the compiled extension (``setrank._native``) is preferred and
the pure NumPy module (``setrank._kernels_py``) is the fallback.  The choice
can be forced with the ``SETRANK_BACKEND`` environment variable (``native`` or
``pure``) or switched at runtime with :func:`use` (used by the benchmark and
the cross-backend tests).

Callers access kernels as module attributes (``backend.matmul(...)``) so a
runtime switch rebinds them everywhere at once.
"""

import os

from . import _kernels_py
from .errors import ConfigError

try:
    from . import _native
except ImportError:
    _native = None

_KERNEL_NAMES = (
    "matmul",
    "matmul_nt",
    "matmul_tn",
    "row_softmax",
    "row_softmax_grad",
    "layer_norm",
    "layer_norm_grad",
    "relu",
    "relu_grad",
)

_active_module = None


def available_backends():
    names = ["pure"]
    if _native is not None:
        names.insert(0, "native")
    return tuple(names)


def active_backend():
    """Name of the backend currently bound: 'native' or 'pure'."""
    return _active_module.name


def use(name):
    """Bind the named backend's kernels to this module."""
    global _active_module
    if name == "pure":
        module = _kernels_py
    elif name == "native":
        if _native is None:
            raise ConfigError("native backend requested but the compiled "
                              "extension setrank._native is not available")
        module = _native
    else:
        raise ConfigError(f"unknown backend {name!r}; expected 'native' or 'pure'")
    _active_module = module
    for fn in _KERNEL_NAMES:
        globals()[fn] = getattr(module, fn)


_requested = os.environ.get("SETRANK_BACKEND", "").strip().lower()
if _requested:
    use(_requested)
else:
    use("native" if _native is not None else "pure")
