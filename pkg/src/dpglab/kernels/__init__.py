"""Element condensation kernels.

The compiled extension is used when it was built; otherwise, or when
``DPGLAB_PURE_PYTHON=1`` is set, the NumPy fallback is selected.
``BACKEND`` names the active implementation.
"""
import os

from dpglab.kernels import _fallback
from dpglab.kernels.errors import LocalFactorizationError

try:
    if os.environ.get("DPGLAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from dpglab.kernels import _condense as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

condense = _impl.condense
dual_norms_sq = _impl.dual_norms_sq

__all__ = ["BACKEND", "LocalFactorizationError", "condense", "dual_norms_sq"]
