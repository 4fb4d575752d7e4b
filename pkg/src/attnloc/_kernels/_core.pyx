# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: union-find component labeling, clamped 1-D
convolution, and corner-aligned bilinear resize.

Signatures mirror attnloc._kernels.pure; the import-time selector in
attnloc._kernels picks whichever backend is available.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline int _find(int* parent, int i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


cdef inline int _union(int* parent, int a, int b) noexcept nogil:
    # keep the smaller root; returns the surviving root
    cdef int ra = _find(parent, a)
    cdef int rb = _find(parent, b)
    if ra == rb:
        return ra
    if ra < rb:
        parent[rb] = ra
        return ra
    parent[ra] = rb
    return rb


def label_components(mask, int connectivity=8):
    """Two-pass union-find labeling; 0 background, 1..n components."""
    if connectivity != 4 and connectivity != 8:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    mask_arr = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef const unsigned char[:, ::1] m = mask_arr
    cdef Py_ssize_t H = m.shape[0], W = m.shape[1]
    labels_arr = np.zeros((H, W), dtype=np.int32)
    cdef int[:, ::1] lab = labels_arr
    # worst case (4-conn checkerboard) needs H*W/2 provisional labels
    parent_arr = np.zeros(H * W // 2 + 2, dtype=np.int32)
    cdef int[::1] parent_mv = parent_arr
    cdef int* parent = &parent_mv[0]
    cdef int nxt = 0
    cdef bint diag = connectivity == 8
    cdef Py_ssize_t y, x
    cdef int cur

    for y in range(H):
        for x in range(W):
            if m[y, x] == 0:
                continue
            cur = 0
            if x > 0 and lab[y, x - 1]:
                cur = lab[y, x - 1]
            if y > 0:
                if diag and x > 0 and lab[y - 1, x - 1]:
                    cur = lab[y - 1, x - 1] if cur == 0 else _union(parent, cur, lab[y - 1, x - 1])
                if lab[y - 1, x]:
                    cur = lab[y - 1, x] if cur == 0 else _union(parent, cur, lab[y - 1, x])
                if diag and x + 1 < W and lab[y - 1, x + 1]:
                    cur = lab[y - 1, x + 1] if cur == 0 else _union(parent, cur, lab[y - 1, x + 1])
            if cur == 0:
                nxt += 1
                parent[nxt] = nxt
                cur = nxt
            lab[y, x] = cur

    # second pass: resolve roots, compact to 1..n in raster order
    remap_arr = np.zeros(nxt + 1, dtype=np.int32)
    cdef int[::1] remap = remap_arr
    cdef int count = 0, r
    for y in range(H):
        for x in range(W):
            if lab[y, x]:
                r = _find(parent, lab[y, x])
                if remap[r] == 0:
                    count += 1
                    remap[r] = count
                lab[y, x] = remap[r]
    return labels_arr


def convolve1d_clamp(img, kernel, int axis):
    """1-D correlation along ``axis`` with clamp-to-edge borders (f64)."""
    img_arr = np.ascontiguousarray(img, dtype=np.float64)
    k_arr = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef double[:, ::1] a = img_arr
    cdef double[::1] k = k_arr
    cdef Py_ssize_t H = a.shape[0], W = a.shape[1]
    cdef Py_ssize_t taps = k.shape[0]
    cdef Py_ssize_t r = taps // 2
    out_arr = np.empty_like(img_arr)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, t, j
    cdef double acc
    if axis == 0:
        for y in range(H):
            for x in range(W):
                acc = 0.0
                for t in range(taps):
                    j = y + t - r
                    if j < 0:
                        j = 0
                    elif j >= H:
                        j = H - 1
                    acc += k[t] * a[j, x]
                out[y, x] = acc
    elif axis == 1:
        for y in range(H):
            for x in range(W):
                acc = 0.0
                for t in range(taps):
                    j = x + t - r
                    if j < 0:
                        j = 0
                    elif j >= W:
                        j = W - 1
                    acc += k[t] * a[y, j]
                out[y, x] = acc
    else:
        raise ValueError(f"axis must be 0 or 1, got {axis}")
    return out_arr


def bilinear_resize(src, Py_ssize_t out_h, Py_ssize_t out_w):
    """Corner-aligned bilinear resize of a 2-D map (f64 output, clamped)."""
    src_arr = np.ascontiguousarray(src, dtype=np.float64)
    cdef double[:, ::1] a = src_arr
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    out_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double lo = src_arr.min(), hi = src_arr.max()
    cdef double sy = 0.0 if (out_h == 1 or h == 1) else (h - 1) / <double>(out_h - 1)
    cdef double sx = 0.0 if (out_w == 1 or w == 1) else (w - 1) / <double>(out_w - 1)
    cdef Py_ssize_t y, x, r0, r1, c0, c1
    cdef double py, px, ty, tx, top, bot, v
    for y in range(out_h):
        py = y * sy
        r0 = <Py_ssize_t>py
        if r0 > h - 1:
            r0 = h - 1
        r1 = r0 + 1 if r0 + 1 < h else h - 1
        ty = py - r0
        for x in range(out_w):
            px = x * sx
            c0 = <Py_ssize_t>px
            if c0 > w - 1:
                c0 = w - 1
            c1 = c0 + 1 if c0 + 1 < w else w - 1
            tx = px - c0
            top = a[r0, c0] + (a[r0, c1] - a[r0, c0]) * tx
            bot = a[r1, c0] + (a[r1, c1] - a[r1, c0]) * tx
            v = top + (bot - top) * ty
            if v < lo:
                v = lo
            elif v > hi:
                v = hi
            out[y, x] = v
    return out_arr
