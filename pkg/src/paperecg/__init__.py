"""Digitize scanned paper ECG sheets and classify the recovered leads with an LSTM."""
from . import _backend

__version__ = "0.1.0"


def backend_name() -> str:
    """Name of the active kernel backend, ``"compiled"`` or ``"python"``."""
    return _backend.kernels.NAME
