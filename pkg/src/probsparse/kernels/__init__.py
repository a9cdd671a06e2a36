"""Hot-loop kernels with a numba path and a pure-numpy fallback.

The backend is chosen at import time from ``PROBSPARSE_BACKEND``
(``numba`` or ``numpy``). ``numba`` is the default and silently degrades to
``numpy`` when numba cannot be imported. Callers must go through the module
attributes (``kernels.softmax_rows_(...)``) so that :func:`set_backend`
takes effect everywhere.
"""

import contextlib
import os

from . import _numpy

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

KERNELS = (
    "softmax_rows_",
    "lse_rows",
    "mean_rows",
    "max_minus_mean_rows",
    "topk_sorted",
    "scatter_rows_",
    "depthwise_conv_",
)

BACKENDS = ("numba", "numpy")

_active = None


def available_backends():
    return tuple(b for b in BACKENDS if b != "numba" or _numba is not None)


def backend_module(name):
    if name == "numpy":
        return _numpy
    if name == "numba":
        if _numba is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _numba
    raise ValueError(f"unknown kernel backend {name!r}; expected one of {BACKENDS}")


def set_backend(name):
    """Rebind every kernel in this module to backend ``name``."""
    global _active
    mod = backend_module(name)
    g = globals()
    for fn in KERNELS:
        g[fn] = getattr(mod, fn)
    _active = name


def get_backend():
    return _active


@contextlib.contextmanager
def use_backend(name):
    prev = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def _initial_backend():
    requested = os.environ.get("PROBSPARSE_BACKEND", "numba").strip().lower()
    if requested == "numba" and _numba is None:
        return "numpy"
    return requested


set_backend(_initial_backend())
