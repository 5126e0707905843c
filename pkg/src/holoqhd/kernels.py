"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting the environment
variable ``HOLOQHD_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from holoqhd import _kernels_py

if os.environ.get("HOLOQHD_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from holoqhd import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

biot_savart = _impl.biot_savart
cubic_interp = _impl.cubic_interp
