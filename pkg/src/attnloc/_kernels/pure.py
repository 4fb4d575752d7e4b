"""NumPy/SciPy implementations of the hot kernels.

Used when the compiled extension is unavailable or when ATTNLOC_PURE=1.
Must stay numerically interchangeable with ``attnloc._kernels._core``;
tests/test_kernels.py enforces parity.
"""

import numpy as np
from scipy import ndimage

_STRUCT8 = np.ones((3, 3), dtype=bool)
_STRUCT4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def label_components(mask, connectivity=8):
    """Label connected foreground regions of a binary mask.

    Returns an int32 array, 0 for background, 1..n for components.
    Label numbering is arbitrary; callers canonicalize ordering.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCT8 if connectivity == 8 else _STRUCT4
    labels, _ = ndimage.label(np.asarray(mask, dtype=np.uint8), structure=structure)
    return labels.astype(np.int32, copy=False)


def convolve1d_clamp(img, kernel, axis):
    """1-D correlation along ``axis`` with clamp-to-edge borders (f64)."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    return ndimage.correlate1d(img, kernel, axis=axis, mode="nearest")


def _axis_coords(n_src, n_dst):
    if n_dst == 1 or n_src == 1:
        i0 = np.zeros(n_dst, dtype=np.int64)
        return i0, i0.copy(), np.zeros(n_dst)
    pos = np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))
    i0 = np.minimum(np.floor(pos).astype(np.int64), n_src - 1)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, pos - i0


def bilinear_resize(src, out_h, out_w):
    """Corner-aligned bilinear resize of a 2-D map (f64 output).

    Output is clamped to the source range so fp rounding can never
    extrapolate past the input min/max.
    """
    src = np.asarray(src, dtype=np.float64)
    r0, r1, ty = _axis_coords(src.shape[0], out_h)
    c0, c1, tx = _axis_coords(src.shape[1], out_w)
    a = src[np.ix_(r0, c0)]
    b = src[np.ix_(r0, c1)]
    c = src[np.ix_(r1, c0)]
    d = src[np.ix_(r1, c1)]
    tx = tx[None, :]
    top = a + (b - a) * tx
    bot = c + (d - c) * tx
    out = top + (bot - top) * ty[:, None]
    return np.clip(out, src.min(), src.max())
