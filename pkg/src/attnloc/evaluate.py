"""Threshold-sweep localization metrics and activation histograms.

Score maps are probability-like [0, 1] images. The box metric sweeps a
fixed grid of thresholds, extracts component boxes at each, and reports
the best achievable accuracy so the number measures the map, not a
particular operating point.
"""

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import InvalidInput
from .segment import BBox, connected_components, iou

DEFAULT_N_TAUS = 100
DEFAULT_DELTAS = (0.3, 0.5, 0.7)
HIST_BINS = 50


@dataclass
class EvalRecord:
    score_map: np.ndarray   # float64 [H, W] in [0, 1]
    gt_boxes: list          # list of BBox
    image_id: str = ""


def default_taus(n: int = DEFAULT_N_TAUS) -> np.ndarray:
    """Bin-centered grid (i + 0.5)/n, strictly inside (0, 1)."""
    if n < 1:
        raise InvalidInput("need at least one threshold")
    return (np.arange(n) + 0.5) / n


def boxes_at_threshold(score_map, tau: float, connectivity: int = 8) -> list:
    """Component boxes of the binarization score > tau, area-descending."""
    mask = np.asarray(score_map) > tau
    return [c.bbox for c in connected_components(mask, connectivity)]


def _best_ious(record: EvalRecord, taus, connectivity: int):
    """Per threshold: (IoU of the largest component's box, best IoU over
    all component boxes), each against the closest ground-truth box."""
    largest = np.zeros(len(taus))
    best = np.zeros(len(taus))
    if not record.gt_boxes:
        return largest, best
    for t_idx, tau in enumerate(taus):
        boxes = boxes_at_threshold(record.score_map, tau, connectivity)
        if not boxes:
            continue
        ious = np.array([[iou(b, g) for g in record.gt_boxes] for b in boxes])
        largest[t_idx] = ious[0].max()
        best[t_idx] = ious.max()
    return largest, best


def max_box_acc(records: list, taus=None, iou_thresh: float = 0.5,
                connectivity: int = 8):
    """Largest-component protocol: at each threshold an image counts as
    correct iff the biggest region's box reaches IoU >= iou_thresh with
    some ground-truth box. Returns (max over thresholds, full curve)."""
    if not records:
        raise InvalidInput("no evaluation records")
    taus = default_taus() if taus is None else np.asarray(taus, dtype=np.float64)
    hits = np.zeros(len(taus))
    for rec in records:
        largest, _ = _best_ious(rec, taus, connectivity)
        hits += largest >= iou_thresh
    accs = hits / len(records)
    curve = [(float(t), float(a)) for t, a in zip(taus, accs)]
    return float(accs.max()), curve


def max_box_acc_v2(records: list, taus=None, deltas=DEFAULT_DELTAS,
                   connectivity: int = 8):
    """Multi-threshold protocol: any component box may match, scored at
    several IoU levels. Returns (mean over deltas of max over taus,
    curve rows (tau, delta, acc) grouped by delta)."""
    if not records:
        raise InvalidInput("no evaluation records")
    taus = default_taus() if taus is None else np.asarray(taus, dtype=np.float64)
    deltas = tuple(deltas)
    best = np.zeros((len(records), len(taus)))
    for r_idx, rec in enumerate(records):
        _, best[r_idx] = _best_ious(rec, taus, connectivity)
    per_delta = []
    curve = []
    for d in deltas:
        accs = (best >= d).mean(axis=0)
        per_delta.append(accs.max())
        curve.extend((float(t), float(d), float(a)) for t, a in zip(taus, accs))
    return float(np.mean(per_delta)), curve


@dataclass
class HistogramResult:
    counts_fg: np.ndarray   # int64 [HIST_BINS]
    counts_bg: np.ndarray
    frac_fg: np.ndarray     # counts normalized within each side
    frac_bg: np.ndarray
    separation: float       # mean inside-box activation minus mean outside


def activation_histogram(records: list, bins: int = HIST_BINS) -> HistogramResult:
    """Pooled fixed-bin histograms of activations inside vs outside the
    ground-truth boxes, over all records."""
    if not records:
        raise InvalidInput("no evaluation records")
    counts_fg = np.zeros(bins, dtype=np.int64)
    counts_bg = np.zeros(bins, dtype=np.int64)
    sum_fg = sum_bg = 0.0
    n_fg = n_bg = 0
    for rec in records:
        m = np.asarray(rec.score_map, dtype=np.float64)
        H, W = m.shape
        inside = np.zeros((H, W), dtype=bool)
        for b in rec.gt_boxes:
            inside |= b.contains_mask(H, W)
        for vals, counts in ((m[inside], counts_fg), (m[~inside], counts_bg)):
            if vals.size == 0:
                continue
            idx = np.clip((vals * bins).astype(np.int64), 0, bins - 1)
            counts += np.bincount(idx, minlength=bins)
        sum_fg += m[inside].sum()
        n_fg += int(inside.sum())
        sum_bg += m[~inside].sum()
        n_bg += int((~inside).sum())
    if n_fg == 0 or n_bg == 0:
        raise InvalidInput("need pixels on both sides of the boxes")
    return HistogramResult(
        counts_fg=counts_fg, counts_bg=counts_bg,
        frac_fg=counts_fg / counts_fg.sum(), frac_bg=counts_bg / counts_bg.sum(),
        separation=float(sum_fg / n_fg - sum_bg / n_bg))


def reference_scores() -> list:
    """Published CUB-200 box-accuracy numbers bundled for context when
    eyeballing runs. Real-image scores; not comparable to the synthetic
    corpus and never used as a test target."""
    text = resources.files("attnloc").joinpath(
        "data/cub_reference_scores.csv").read_text()
    rows = list(csv.reader(text.splitlines()))
    return [{"method": m, "metric": k, "backbone": b, "score": float(s)}
            for m, k, b, s in rows[1:]]
