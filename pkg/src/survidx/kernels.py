"""Kernel selection: compiled extension when available, NumPy fallback otherwise.

Set SURVIDX_PURE=1 to force the fallback (used by the benchmark and by tests
that compare the two implementations).
"""

import os

if os.environ.get("SURVIDX_PURE"):
    from . import _kernels_py as _impl

    USING_COMPILED = False
else:
    try:
        from . import _kernels as _impl

        USING_COMPILED = True
    except ImportError:
        from . import _kernels_py as _impl

        USING_COMPILED = False

gs_sweep = _impl.gs_sweep
gs_solve = _impl.gs_solve
