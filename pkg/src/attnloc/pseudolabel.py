"""Pseudo-pixel supervision sampled from a winning box.

Foreground pixels are the strongest attention values inside the box,
background the weakest outside; each side takes a ceil(n_frac * count)
slice. Ties are broken row-major so the sample is order-independent of
the sort implementation.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyBackground, FormatError, InvalidParam, IoError
from .segment import BBox

PSEUDO_HEADER = "image_id,pixel_index,label"


@dataclass
class PseudoLabels:
    fg: np.ndarray  # flat row-major pixel indices, ascending
    bg: np.ndarray


def sample_pseudo_labels(attention, box: BBox, n_frac: float = 0.1) -> PseudoLabels:
    att = np.asarray(attention, dtype=np.float64)
    if not 0.0 < n_frac <= 1.0:
        raise InvalidParam(f"n_frac must lie in (0, 1], got {n_frac}")
    H, W = att.shape
    inside_mask = box.contains_mask(H, W).ravel()
    flat = att.ravel()
    inside = np.flatnonzero(inside_mask)
    outside = np.flatnonzero(~inside_mask)
    if outside.size == 0:
        raise EmptyBackground("box covers the whole image")
    n_fg = int(np.ceil(n_frac * inside.size))
    n_bg = int(np.ceil(n_frac * outside.size))
    # lexsort: last key is primary, so attention dominates and the flat
    # index (already ascending row-major) settles ties
    fg_order = np.lexsort((inside, -flat[inside]))
    bg_order = np.lexsort((outside, flat[outside]))
    fg = np.sort(inside[fg_order[:n_fg]])
    bg = np.sort(outside[bg_order[:n_bg]])
    return PseudoLabels(fg=fg, bg=bg)


def subsample(labels: PseudoLabels, k: int, rng: np.random.Generator) -> PseudoLabels:
    """Draw up to k indices per side without replacement (foreground
    first, then background, so consumer RNG streams are stable)."""
    if k < 1:
        raise InvalidParam(f"k must be >= 1, got {k}")
    fg, bg = labels.fg, labels.bg
    if fg.size > k:
        fg = np.sort(rng.choice(fg, size=k, replace=False))
    if bg.size > k:
        bg = np.sort(rng.choice(bg, size=k, replace=False))
    return PseudoLabels(fg=fg, bg=bg)


def write_pseudo_labels(items: list, path) -> None:
    """items: sequence of (image_id, PseudoLabels). Foreground rows
    (label 1) precede background rows (label 0) for each image."""
    lines = [PSEUDO_HEADER]
    for image_id, pl in items:
        for idx in pl.fg:
            lines.append(f"{image_id},{int(idx)},1")
        for idx in pl.bg:
            lines.append(f"{image_id},{int(idx)},0")
    try:
        with open(path, "w", newline="") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def read_pseudo_labels(path) -> dict:
    path = Path(path)
    try:
        with open(path, "r", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if not rows or ",".join(rows[0]) != PSEUDO_HEADER:
        raise FormatError(f"{path}: bad or missing header")
    acc: dict = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 fields")
        image_id, idx_s, lab_s = row
        try:
            idx = int(idx_s)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad pixel index") from None
        if lab_s not in ("0", "1"):
            raise FormatError(f"{path}:{lineno}: label must be 0 or 1")
        fg, bg = acc.setdefault(image_id, ([], []))
        (fg if lab_s == "1" else bg).append(idx)
    return {iid: PseudoLabels(fg=np.array(sorted(fg), dtype=np.int64),
                              bg=np.array(sorted(bg), dtype=np.int64))
            for iid, (fg, bg) in acc.items()}
