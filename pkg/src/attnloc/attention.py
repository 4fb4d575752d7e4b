"""Candidate localization maps from a stack of attention heads.

A stack [K, h, w] yields five candidates: heads 0..3 normalized
independently, plus the mean over all K heads (averaged first, then
normalized). Candidate index 4 is therefore always the head-mean map.
"""

import numpy as np

from . import _kernels
from .errors import InsufficientHeads, InvalidInput

N_CANDIDATES = 5
MEAN_MAP_INDEX = 4


def normalize_map(m) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant map collapses to zeros."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise InvalidInput("map contains non-finite values")
    lo = m.min()
    hi = m.max()
    if hi - lo <= 0.0:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def candidate_maps(attn) -> np.ndarray:
    attn = np.asarray(attn, dtype=np.float64)
    if attn.ndim != 3:
        raise InvalidInput(f"attention stack must be [K, h, w], got {attn.shape}")
    if attn.shape[0] < 5:
        raise InsufficientHeads(f"need at least 5 heads, got {attn.shape[0]}")
    if not np.all(np.isfinite(attn)):
        raise InvalidInput("attention stack contains non-finite values")
    out = np.empty((N_CANDIDATES,) + attn.shape[1:], dtype=np.float64)
    for k in range(4):
        out[k] = normalize_map(attn[k])
    out[MEAN_MAP_INDEX] = normalize_map(attn.mean(axis=0))
    return out


def pool_bounds(n_src: int, n_out: int) -> list:
    """Half-open block extents [floor(i*n/g), ceil((i+1)*n/g)) per cell."""
    if n_out < 1 or n_src < 1:
        raise InvalidInput("pooling extents must be positive")
    return [(i * n_src // n_out, -((i + 1) * n_src // -n_out))
            for i in range(n_out)]


def adaptive_avg_pool(m, out_h: int, out_w: int) -> np.ndarray:
    """Block-mean pooling onto an out_h x out_w grid; blocks tile the
    source exactly and may differ in size by one row or column."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInput(f"expected a 2-d map, got shape {m.shape}")
    rb = pool_bounds(m.shape[0], out_h)
    cb = pool_bounds(m.shape[1], out_w)
    out = np.empty((out_h, out_w), dtype=np.float64)
    for i, (r0, r1) in enumerate(rb):
        for j, (c0, c1) in enumerate(cb):
            out[i, j] = m[r0:r1, c0:c1].mean()
    return out


def upsample_map(m, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear, corner-aligned resize to image resolution."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInput(f"expected a 2-d map, got shape {m.shape}")
    if out_h < 1 or out_w < 1:
        raise InvalidInput("output extents must be positive")
    return _kernels.bilinear_resize(m, out_h, out_w)
