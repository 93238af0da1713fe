"""Select the merge kernel implementation at import time.

The compiled extension is preferred; the pure-Python kernels are the
fallback. Set PCLV_PURE_PYTHON=1 to force the fallback (used by the
benchmark and the backend-equivalence tests).
"""

from __future__ import annotations

import os

if os.environ.get("PCLV_PURE_PYTHON"):
    from . import _kernels as kernels
else:
    try:
        from . import _core as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels as kernels

COMPILED = bool(getattr(kernels, "COMPILED", False))
BACKEND_NAME = "compiled" if COMPILED else "pure-python"
