"""Kernel backend selection.

The compiled extension is used when it imports; set ``CCCONUCB_PURE=1`` to
force the numpy fallback (the benchmark and the backend-agreement tests do).
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CCCONUCB_PURE") != "1":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

LINEAR_SUM = _kernels_py.LINEAR_SUM
SATURATING = _kernels_py.SATURATING

arm_bounds = _impl.arm_bounds
group_lower_values = _impl.group_lower_values
scan_rows = _impl.scan_rows
group_lower_total = _impl.group_lower_total
ridge_update = _impl.ridge_update
