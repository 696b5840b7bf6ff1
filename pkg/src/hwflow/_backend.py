"""Kernel backend selection: the compiled extension if importable, else NumPy.

Set ``HWFLOW_PURE=1`` to force the NumPy kernels.
"""
import os

from . import _pycore

core = _pycore
if not os.environ.get("HWFLOW_PURE"):
    try:
        from . import _core as core  # noqa: F811
    except ImportError:
        core = _pycore

BACKEND = core.BACKEND
