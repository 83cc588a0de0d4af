"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy twin.
``PAPERECG_BACKEND=python`` forces the fallback, ``=compiled`` makes a missing
extension an error.
"""
from __future__ import annotations

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

KERNEL_NAMES = (
    "median_filter_u8",
    "non_max_suppress",
    "gradients7",
    "gradient_nms",
    "hysteresis",
    "label_components",
    "trace_borders",
    "hough_ppht",
    "lstm_forward",
    "lstm_backward",
)


def _load():
    choice = os.environ.get("PAPERECG_BACKEND", "auto").lower()
    if choice == "python":
        return _pykernels
    try:
        from . import _kernels
    except ImportError:
        if choice == "compiled":
            raise
        log.info("compiled kernels unavailable; using the NumPy fallback")
        return _pykernels
    return _kernels


kernels = _load()


def available() -> dict:
    """Map backend name -> module for every backend importable in this process."""
    found = {"python": _pykernels}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        found["compiled"] = _kernels
    return found


def use(name: str) -> None:
    """Switch the active backend (tests and benchmarks)."""
    global kernels
    kernels = available()[name]
