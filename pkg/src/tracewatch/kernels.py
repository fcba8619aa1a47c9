"""Backend selection for the hot kernels.

The compiled backend is used when the extension was built; set
``TRACEWATCH_PURE_PYTHON=1`` to force the reference implementation.
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

from tracewatch import _pykernels


def load_backend(name: str) -> ModuleType:
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("tracewatch._ckernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        load_backend("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


if os.environ.get("TRACEWATCH_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        _impl = load_backend("cython")
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

split_record = _impl.split_record
split_sid = _impl.split_sid
quantize = _impl.quantize
nearest_rank = _impl.nearest_rank
