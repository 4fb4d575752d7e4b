"""Geometric core: Otsu thresholding, connected components, box extraction, IoU.

All maps entering this module are expected to be min-max normalized to
[0, 1]. Otsu uses a fixed 256-bin histogram so thresholds are
bit-reproducible; binarization is always ``value > t*``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateMap, InvalidInput

N_BINS = 256


@dataclass(frozen=True)
class BBox:
    """Half-open pixel rectangle: x in [x0, x1), y in [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise InvalidInput(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def contains_mask(self, height: int, width: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[self.y0:self.y1, self.x0:self.x1] = True
        return m


@dataclass
class Component:
    """One 8- (or 4-) connected foreground region.

    ``pixels`` are row-major flat indices in ascending order; ``bbox`` is
    the tight hull.
    """

    pixels: np.ndarray
    area: int
    bbox: BBox


def otsu_threshold(value_map) -> float:
    """Between-class-variance threshold on a fixed 256-bin histogram.

    Bin i covers [i/256, (i+1)/256); 1.0 lands in bin 255. Returns
    t* = (argmax_t sigma_b^2(t) + 1)/256 with ties broken toward the
    smallest t. Foreground is ``value > t*`` everywhere downstream.
    """
    v = np.asarray(value_map, dtype=np.float64).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise InvalidInput("map must be nonempty and finite")
    if v.min() < 0.0 or v.max() > 1.0:
        raise InvalidInput("map values must lie in [0, 1]")
    bins = np.minimum((v * N_BINS).astype(np.int64), N_BINS - 1)
    hist = np.bincount(bins, minlength=N_BINS)
    if np.count_nonzero(hist) < 2:
        raise DegenerateMap("map occupies a single histogram bin")

    n = v.size
    idx = np.arange(N_BINS, dtype=np.int64)
    w0 = np.cumsum(hist)
    s0 = np.cumsum(hist * idx)
    w1 = n - w0
    s1 = s0[-1] - s0
    valid = (w0 > 0) & (w1 > 0)
    sigma = np.zeros(N_BINS)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / w0
        mu1 = s1 / w1
    # identical expression to the brute-force oracle so near-ties behave
    # identically under f64 rounding
    sigma[valid] = ((w0[valid] / n) * (w1[valid] / n)
                    * (mu0[valid] - mu1[valid]) ** 2)
    t_bin = int(np.argmax(sigma))
    return (t_bin + 1) / N_BINS


def connected_components(mask, connectivity: int = 8) -> list[Component]:
    """Components of a binary mask, sorted by area descending, ties by
    (min row, min col)."""
    mask = np.asarray(mask, dtype=bool)
    labels = _kernels.label_components(mask.astype(np.uint8), connectivity)
    flat = labels.ravel()
    fg_idx = np.flatnonzero(flat)
    if fg_idx.size == 0:
        return []
    width = mask.shape[1]
    labs = flat[fg_idx]
    order = np.argsort(labs, kind="stable")  # row-major within each label
    sorted_idx = fg_idx[order]
    sorted_labs = labs[order]
    starts = np.flatnonzero(np.diff(sorted_labs, prepend=sorted_labs[0] - 1))
    bounds = np.append(starts, sorted_labs.size)

    comps = []
    for k in range(starts.size):
        pix = sorted_idx[bounds[k]:bounds[k + 1]]
        rows = pix // width
        cols = pix % width
        bbox = BBox(int(cols.min()), int(rows.min()),
                    int(cols.max()) + 1, int(rows.max()) + 1)
        comps.append(Component(pixels=pix, area=int(pix.size), bbox=bbox))
    comps.sort(key=lambda c: (-c.area, c.bbox.y0, c.bbox.x0))
    return comps


def boxes_from_map(value_map, min_area_frac: float = 0.0,
                   connectivity: int = 8) -> list[BBox]:
    """Otsu -> binarize -> components -> tight boxes.

    Components with pixel area below ``min_area_frac * H * W`` are
    dropped. A degenerate (single-bin) map yields no boxes.
    """
    value_map = np.asarray(value_map)
    try:
        t = otsu_threshold(value_map)
    except DegenerateMap:
        return []
    mask = value_map > t
    comps = connected_components(mask, connectivity)
    min_area = min_area_frac * value_map.shape[0] * value_map.shape[1]
    return [c.bbox for c in comps if c.area >= min_area]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union with half-open box semantics."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)
