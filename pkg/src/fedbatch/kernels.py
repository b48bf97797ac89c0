"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``FEDBATCH_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py as pure

if os.environ.get("FEDBATCH_PURE_PYTHON", "") not in ("", "0"):
    _impl = pure
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "python"

minmax_compositions = _impl.minmax_compositions
greedy_fill = _impl.greedy_fill
local_sgd_devices = _impl.local_sgd_devices

__all__ = ["BACKEND", "minmax_compositions", "greedy_fill", "local_sgd_devices", "pure"]
