"""Kernel backend selection.

The compiled module is used when it was built; ``SEMLOC_BACKEND=python``
forces the pure-Python twin.
"""
import os

from semloc import _pykernels

if os.environ.get("SEMLOC_BACKEND", "").lower() == "python":
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from semloc import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _pykernels
        BACKEND = "python"
