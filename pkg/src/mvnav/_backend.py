"""Pick the compiled kernels when importable, numpy otherwise.

Set ``MVNAV_BACKEND=python`` to force the fallback.
"""
import os

if os.environ.get("MVNAV_BACKEND", "").lower() == "python":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        from . import _kernels_py as kernels

BACKEND = kernels.BACKEND
