"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
implementation.  Set ``RNNTONE_KERNEL=python`` to force the fallback.
"""
import os

from rnntone import _pykernels

python_backend = _pykernels
compiled_backend = None

try:
    from rnntone import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

if compiled_backend is not None and os.environ.get("RNNTONE_KERNEL", "").lower() != "python":
    backend = compiled_backend
    BACKEND = "cython"
else:
    backend = python_backend
    BACKEND = "python"

recur_forward = backend.recur_forward
recur_backward = backend.recur_backward
pool_forward = backend.pool_forward
