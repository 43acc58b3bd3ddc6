"""Kernel backend selection.

The compiled ``_ckernels`` module is used when it was built; otherwise the numpy
fallback in ``_pykernels``. Set ``DYNATTN_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

fallback = _pykernels
compiled = None
if not os.environ.get("DYNATTN_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

active = compiled if compiled is not None else fallback
BACKEND = "cython" if compiled is not None else "python"

query_entry = active.query_entry
k_column = active.k_column
bool_matmul = active.bool_matmul


def available():
    """Mapping of backend name to kernel module for every backend that loaded."""
    out = {"python": fallback}
    if compiled is not None:
        out["cython"] = compiled
    return out
