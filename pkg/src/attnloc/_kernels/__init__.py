"""Kernel backend selection.

Prefers the compiled Cython extension; falls back to the NumPy/SciPy
implementations when it is missing or when ATTNLOC_PURE=1 is set.
Both backends expose identical signatures and interchangeable numerics.
"""

import os

from . import pure

if os.environ.get("ATTNLOC_PURE"):
    _backend = pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _backend
        BACKEND = "compiled"
    except ImportError:
        _backend = pure
        BACKEND = "pure"

label_components = _backend.label_components
convolve1d_clamp = _backend.convolve1d_clamp
bilinear_resize = _backend.bilinear_resize

__all__ = ["BACKEND", "label_components", "convolve1d_clamp", "bilinear_resize", "pure"]
