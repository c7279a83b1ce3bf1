"""Simulation backend selection.

The compiled extension is used whenever it imported successfully and the
dynamics kind has a closed-form kernel; otherwise the pure-Python loops
run.  ``REPLAYMARK_FORCE_PYTHON=1`` in the environment disables the
extension globally (handy for the backend-equivalence tests and the
benchmark).
"""

from __future__ import annotations

import os

from . import _loop_py

try:
    from . import _loop_c
except ImportError:  # extension not built
    _loop_c = None

_FORCE_PYTHON = os.environ.get("REPLAYMARK_FORCE_PYTHON", "") == "1"

COMPILED_AVAILABLE = _loop_c is not None and not _FORCE_PYTHON


def select(dynamics, backend="auto"):
    """Return the kernel module for a dynamics descriptor.

    ``backend`` may be "auto", "compiled", or "python".  Requesting
    "compiled" for a dynamics kind without a kernel raises ValueError.
    """
    kind = getattr(dynamics, "kind_id", 0)
    if backend == "python":
        return _loop_py
    if backend == "compiled":
        if _loop_c is None:
            raise ValueError("compiled backend requested but the extension is not built")
        if kind == 0:
            raise ValueError("compiled backend cannot run callable dynamics")
        return _loop_c
    if COMPILED_AVAILABLE and kind != 0:
        return _loop_c
    return _loop_py
