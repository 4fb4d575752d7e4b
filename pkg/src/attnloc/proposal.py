"""Box proposals scored through blur composites.

Each candidate map is upsampled to image resolution, thresholded, and
its components become boxes. For every box we build a composite image
that keeps the original pixels inside the box and replaces everything
outside with a Gaussian-blurred copy; a whole-image classifier then
scores the composite, so a box that covers the evidence scores like the
clean image while an off-object box destroys it.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .attention import adaptive_avg_pool, upsample_map
from .errors import InvalidDataset, InvalidInput, InvalidParam, NoProposal
from .segment import BBox, boxes_from_map

DEFAULT_MIN_AREA_FRAC = 0.0


def gaussian_kernel(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise InvalidParam(f"sigma must be positive, got {sigma}")
    r = int(math.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(image, sigma: float) -> np.ndarray:
    """Separable blur with clamp-to-edge borders; f64 accumulation, the
    result is cast back to the input's float32."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidInput(f"expected [H, W, 3], got {image.shape}")
    k = gaussian_kernel(sigma)
    out = np.empty(image.shape, dtype=np.float64)
    for c in range(3):
        tmp = _kernels.convolve1d_clamp(image[:, :, c].astype(np.float64), k, 0)
        out[:, :, c] = _kernels.convolve1d_clamp(tmp, k, 1)
    return out.astype(np.float32)


@dataclass
class ProposalImage:
    image: np.ndarray     # blur composite, float32 [H, W, 3]
    box: BBox
    source_map: int       # candidate index the box came from
    attention: np.ndarray  # that candidate upsampled to [H, W], float64


@dataclass
class Proposal:
    """The winning proposal: box, provenance, predicted class, and the
    attention map it was cut from."""
    box: BBox
    source_map: int
    class_id: int
    confidence: float
    attention: np.ndarray


def make_proposals(image, cand_maps, sigma: float = None,
                   min_area_frac: float = DEFAULT_MIN_AREA_FRAC,
                   connectivity: int = 8) -> list:
    """Proposals in canonical order: candidate maps first, then each
    map's components by decreasing area. This index order is the
    contract every downstream score table refers to."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidInput(f"expected [H, W, 3], got {image.shape}")
    H, W = image.shape[:2]
    if sigma is None:
        sigma = min(H, W) / 8.0
    blurred = gaussian_blur(image, sigma)
    proposals = []
    for m_idx in range(np.asarray(cand_maps).shape[0]):
        up = upsample_map(cand_maps[m_idx], H, W)
        for box in boxes_from_map(up, min_area_frac, connectivity):
            comp = blurred.copy()
            comp[box.y0:box.y1, box.x0:box.x1] = image[box.y0:box.y1,
                                                       box.x0:box.x1]
            proposals.append(ProposalImage(comp, box, m_idx, up))
    return proposals


class Scorer:
    """Whole-image classifier interface: probabilities per class."""

    def score(self, image) -> np.ndarray:
        raise NotImplementedError

    def score_proposal(self, index: int, image) -> np.ndarray:
        # hook for score tables precomputed outside the pipeline
        return self.score(image)


def score_all(proposals: list, scorer: Scorer) -> np.ndarray:
    if not proposals:
        raise NoProposal("no proposals to score")
    return np.stack([scorer.score_proposal(i, p.image)
                     for i, p in enumerate(proposals)])


def select_from_scores(scores: np.ndarray):
    """Argmax over the [n_proposals, n_classes] table. Row-major argmax
    makes ties fall to the earlier proposal, then the lower class id."""
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.size == 0:
        raise NoProposal("empty score table")
    flat = int(np.argmax(scores))
    idx, cls = divmod(flat, scores.shape[1])
    return idx, cls, float(scores[idx, cls])


def select_best(proposals: list, scorer: Scorer) -> Proposal:
    scores = score_all(proposals, scorer)
    idx, cls, conf = select_from_scores(scores)
    p = proposals[idx]
    return Proposal(box=p.box, source_map=p.source_map, class_id=cls,
                    confidence=conf, attention=p.attention)


# ---------------------------------------------------------------------------
# toy scorer: multinomial logistic regression on pooled-intensity features


def toy_features(image) -> np.ndarray:
    """64 block-mean grayscale cells + 3 channel means + intercept."""
    image = np.asarray(image, dtype=np.float64)
    gray = image.mean(axis=2)
    pooled = adaptive_avg_pool(gray, 8, 8).ravel()
    means = image.mean(axis=(0, 1))
    return np.concatenate([pooled, means, [1.0]])


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class ToyScorer(Scorer):
    def __init__(self, weights: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def score(self, image) -> np.ndarray:
        return _softmax_rows(self.weights @ toy_features(image))


def toy_scorer_fit(manifest, lr: float = 0.5, steps: int = 300,
                   rng_seed: int = 0) -> ToyScorer:
    """Full-batch gradient descent from zero init; deterministic, the
    seed argument is kept for interface symmetry."""
    del rng_seed
    feats, labels = [], []
    for rec in manifest:
        feats.append(toy_features(manifest.load_image(rec)))
        labels.append(rec.label)
    if not feats:
        raise InvalidDataset("empty manifest")
    X = np.stack(feats)
    y = np.asarray(labels, dtype=np.int64)
    if y.min() < 0:
        raise InvalidDataset("negative class label")
    if np.unique(y).size < 2:
        raise InvalidDataset("need at least 2 distinct classes to fit")
    n_classes = int(y.max()) + 1
    onehot = np.zeros((y.size, n_classes))
    onehot[np.arange(y.size), y] = 1.0
    Wt = np.zeros((n_classes, X.shape[1]))
    for _ in range(steps):
        p = _softmax_rows(X @ Wt.T)
        Wt -= lr * ((p - onehot).T @ X) / y.size
    return ToyScorer(Wt)


class PrecomputedScores(Scorer):
    """Score table keyed by proposal index, for runs where probabilities
    were produced elsewhere and shipped as CSV."""

    def __init__(self, table: np.ndarray):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2:
            raise InvalidInput("score table must be [n_proposals, n_classes]")
        self.table = table

    def score(self, image) -> np.ndarray:
        raise InvalidInput("precomputed scores are indexed by proposal")

    def score_proposal(self, index: int, image) -> np.ndarray:
        if not 0 <= index < self.table.shape[0]:
            raise InvalidInput(f"no scores for proposal {index}")
        return self.table[index]
