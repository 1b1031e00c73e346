"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it was built; otherwise the
numpy implementation in ``_kernels_py`` is loaded.  Setting the environment
variable ``DTNULL_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("DTNULL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

quantize_phases = _impl.quantize_phases
sinr_scan = _impl.sinr_scan
