"""Backend selection for the hot row kernels.

Two interchangeable implementations exist:

* ``star.kernels.jit``: numba ``@njit`` loops (fast, compiled on first use)
* ``star.kernels.reference``: pure numpy (always available)

The active backend is chosen once, lazily, from the ``STAR_BACKEND``
environment variable: ``numba``, ``numpy``, or ``auto`` (the default:
numba when importable, numpy otherwise).  ``set_backend`` overrides the
choice at runtime; ``star bench --kernels`` compares the two.

Both backends compute identical functions; only float summation order
may differ, so cross-backend comparisons are close to 1e-12, not
bit-equal.  Within one backend, results are bit-reproducible.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import reference

_active: ModuleType | None = None


def _load_jit() -> ModuleType:
    from . import jit  # deferred: importing numba is slow

    return jit


def have_numba() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def set_backend(name: str) -> ModuleType:
    """Force the backend for this process: 'numba' or 'numpy'."""
    global _active
    if name == "numpy":
        _active = reference
    elif name == "numba":
        _active = _load_jit()
    else:
        raise ValueError(f"unknown kernel backend {name!r} (use 'numba' or 'numpy')")
    return _active


def active() -> ModuleType:
    """Resolve and return the active kernel module."""
    global _active
    if _active is None:
        choice = os.environ.get("STAR_BACKEND", "auto")
        if choice == "auto":
            _active = _load_jit() if have_numba() else reference
        else:
            set_backend(choice)
    return _active


def backend_name() -> str:
    return active().NAME
