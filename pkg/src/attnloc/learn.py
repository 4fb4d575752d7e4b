"""Two-channel pixel localizer trained on pseudo-labels.

Every pixel becomes a 6-vector (r, g, b, x/(W-1), y/(H-1), attention)
fed through a small tanh MLP with a background/foreground softmax. The
objective is a partial cross-entropy over the sampled pixels, optionally
regularized by a dense pairwise smoothness term on a pooled grid and a
weak image-level class term. All gradients are analytic; the finite
difference suite pins them down, so keep forward and backward in
lockstep when editing.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import adaptive_avg_pool, pool_bounds
from .errors import (DegeneratePooling, FormatError, InvalidDataset,
                     InvalidLabels, InvalidParam, NumericError)
from .pseudolabel import PseudoLabels, subsample
from .tensorio import read_tensor, write_tensor

N_FEATURES = 6
HIDDEN = 16
TRACE_HEADER = "step,loss_total,loss_ce,loss_crf,loss_class"
PARAM_FILES = ("w1", "b1", "w2", "b2")


@dataclass
class LocalizerParams:
    w1: np.ndarray   # [6, 16]
    b1: np.ndarray   # [16]
    w2: np.ndarray   # [16, 2]
    b2: np.ndarray   # [2]
    head: np.ndarray = None  # [n_classes, 7], bias in the last column


@dataclass
class CrfParams:
    sigma_spatial: float = 8.0   # pixels, on the pooled grid
    sigma_range: float = 0.1     # color units
    grid_size: int = 32

    def __post_init__(self):
        if self.sigma_spatial <= 0 or self.sigma_range <= 0:
            raise InvalidParam("CRF bandwidths must be positive")
        if self.grid_size < 2:
            raise InvalidParam("grid_size must be >= 2")


@dataclass
class TrainerConfig:
    lr: float = 0.05
    steps: int = 500
    lambda_crf: float = 1e-4
    lambda_class: float = 0.0
    seed: int = 0
    crf: CrfParams = field(default_factory=CrfParams)
    n_classes: int = None
    resample_k: int = None

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidParam("lr must be positive")
        if self.steps < 0:
            raise InvalidParam("steps must be >= 0")
        if self.lambda_crf < 0 or self.lambda_class < 0:
            raise InvalidParam("loss weights must be >= 0")


@dataclass
class TrainExample:
    image: np.ndarray       # float32 [H, W, 3]
    attention: np.ndarray   # float64 [H, W], winning candidate upsampled
    labels: PseudoLabels
    class_id: int = 0


INIT_GAIN = 4.0  # short fixed-step runs need the extra drive to saturate


def init_params(rng: np.random.Generator, n_classes: int = None) -> LocalizerParams:
    w1 = rng.normal(0.0, INIT_GAIN * np.sqrt(1.0 / N_FEATURES),
                    (N_FEATURES, HIDDEN))
    w2 = rng.normal(0.0, INIT_GAIN * np.sqrt(1.0 / HIDDEN), (HIDDEN, 2))
    head = np.zeros((n_classes, N_FEATURES + 1)) if n_classes else None
    return LocalizerParams(w1=w1, b1=np.zeros(HIDDEN), w2=w2,
                           b2=np.zeros(2), head=head)


def build_features(image, attention) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    att = np.asarray(attention, dtype=np.float64)
    H, W = att.shape
    xs = np.arange(W) / (W - 1) if W > 1 else np.zeros(W)
    ys = np.arange(H) / (H - 1) if H > 1 else np.zeros(H)
    X = np.empty((H * W, N_FEATURES))
    X[:, 0:3] = image.reshape(-1, 3)
    X[:, 3] = np.tile(xs, H)
    X[:, 4] = np.repeat(ys, W)
    X[:, 5] = att.ravel()
    return X


def forward(params: LocalizerParams, X: np.ndarray) -> dict:
    h_pre = X @ params.w1 + params.b1
    h = np.tanh(h_pre)
    z = h @ params.w2 + params.b2
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    S = e / e.sum(axis=1, keepdims=True)
    return {"X": X, "h": h, "S": S}


def backward(params: LocalizerParams, cache: dict, grad_z: np.ndarray) -> dict:
    h, X = cache["h"], cache["X"]
    dw2 = h.T @ grad_z
    db2 = grad_z.sum(axis=0)
    dh = grad_z @ params.w2.T
    dpre = dh * (1.0 - h * h)
    return {"w1": X.T @ dpre, "b1": dpre.sum(axis=0), "w2": dw2, "b2": db2}


def _grad_logits_from_probs(S: np.ndarray, grad_S: np.ndarray) -> np.ndarray:
    # softmax jacobian applied row-wise: dz_c = S_c (g_c - sum_k g_k S_k)
    inner = (grad_S * S).sum(axis=1, keepdims=True)
    return S * (grad_S - inner)


def loss_partial_ce(S: np.ndarray, labels: PseudoLabels):
    """Mean negative log-likelihood over the labeled pixels only;
    unlabeled pixels contribute nothing. Returns the loss and its
    gradient with respect to S."""
    n = labels.fg.size + labels.bg.size
    if n == 0:
        raise InvalidLabels("no labeled pixels")
    loss = 0.0
    grad_S = np.zeros_like(S)
    if labels.fg.size:
        loss -= np.log(S[labels.fg, 1]).sum()
        grad_S[labels.fg, 1] = -1.0 / (n * S[labels.fg, 1])
    if labels.bg.size:
        loss -= np.log(S[labels.bg, 0]).sum()
        grad_S[labels.bg, 0] = -1.0 / (n * S[labels.bg, 0])
    return loss / n, grad_S


def _crf_affinity(image, crf: CrfParams):
    """Pairwise weights on the pooled grid plus the block extents needed
    to route gradients back to pixels."""
    image = np.asarray(image, dtype=np.float64)
    H, W = image.shape[:2]
    gh, gw = min(crf.grid_size, H), min(crf.grid_size, W)
    rb = pool_bounds(H, gh)
    cb = pool_bounds(W, gw)
    rgb = np.stack([adaptive_avg_pool(image[:, :, c], gh, gw).ravel()
                    for c in range(3)], axis=1)          # [M, 3]
    r_pos = np.array([(lo + hi - 1) / 2.0 for lo, hi in rb])
    c_pos = np.array([(lo + hi - 1) / 2.0 for lo, hi in cb])
    pos = np.stack([np.repeat(r_pos, gw), np.tile(c_pos, gh)], axis=1)
    d_pos = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
    d_rgb = ((rgb[:, None, :] - rgb[None, :, :]) ** 2).sum(axis=2)
    aff = np.exp(-d_pos / (2.0 * crf.sigma_spatial ** 2)
                 - d_rgb / (2.0 * crf.sigma_range ** 2))
    np.fill_diagonal(aff, 0.0)
    return aff, rb, cb


def loss_crf(S: np.ndarray, image, crf: CrfParams):
    """Relaxed pairwise potential sum(c) sum(ij) W_ij S_ic (1 - S_jc) / M^2
    on the pooled grid. Returns the loss and its gradient with respect
    to the full-resolution probabilities."""
    image = np.asarray(image)
    H, W = image.shape[:2]
    aff, rb, cb = _crf_affinity(image, crf)
    gh, gw = len(rb), len(cb)
    m = gh * gw
    pooled = np.stack([adaptive_avg_pool(S[:, c].reshape(H, W), gh, gw).ravel()
                       for c in range(2)], axis=1)       # [M, 2]
    loss = 0.0
    grad_pooled = np.empty_like(pooled)
    for c in range(2):
        sc = pooled[:, c]
        loss += sc @ (aff @ (1.0 - sc))
        grad_pooled[:, c] = aff @ (1.0 - sc) - aff.T @ sc
    loss /= m * m
    grad_pooled /= m * m
    grad_S = np.zeros_like(S)
    gs2 = grad_S.reshape(H, W, 2)
    gp = grad_pooled.reshape(gh, gw, 2)
    for i, (r0, r1) in enumerate(rb):
        for j, (c0, c1) in enumerate(cb):
            gs2[r0:r1, c0:c1, :] += gp[i, j] / ((r1 - r0) * (c1 - c0))
    return loss, grad_S


def loss_class(S: np.ndarray, X: np.ndarray, class_id: int, head: np.ndarray):
    """Image-level cross-entropy on foreground-mass-pooled features.

    g = sum_i S_i1 X_i / sum_i S_i1, logits = head[:, :6] @ g + head[:, 6].
    Returns (loss, grad wrt S, grad wrt head).
    """
    mass = S[:, 1]
    denom = mass.sum()
    if denom < 1e-12:
        raise DegeneratePooling("foreground mass collapsed to zero")
    g = (mass @ X) / denom
    z = head[:, :N_FEATURES] @ g + head[:, N_FEATURES]
    z = z - z.max()
    e = np.exp(z)
    p = e / e.sum()
    if not 0 <= class_id < head.shape[0]:
        raise InvalidDataset(f"class id {class_id} outside head range")
    loss = -np.log(p[class_id])
    dz = p.copy()
    dz[class_id] -= 1.0
    grad_head = np.concatenate([np.outer(dz, g), dz[:, None]], axis=1)
    dg = head[:, :N_FEATURES].T @ dz
    grad_S = np.zeros_like(S)
    grad_S[:, 1] = (X - g) @ dg / denom
    return float(loss), grad_S, grad_head


def step_gradients(params: LocalizerParams, X: np.ndarray, labels: PseudoLabels,
                   image, class_id: int, cfg: TrainerConfig):
    """One example's losses and parameter gradients; the exact inner
    computation of train(), factored out so tests can difference it."""
    cache = forward(params, X)
    S = cache["S"]
    ce, grad_S = loss_partial_ce(S, labels)
    losses = {"ce": ce, "crf": 0.0, "class": 0.0}
    grad_head = None
    if cfg.lambda_crf > 0:
        crf_l, g = loss_crf(S, image, cfg.crf)
        losses["crf"] = crf_l
        grad_S = grad_S + cfg.lambda_crf * g
    if cfg.lambda_class > 0:
        cls_l, g, gh = loss_class(S, X, class_id, params.head)
        losses["class"] = cls_l
        grad_S = grad_S + cfg.lambda_class * g
        grad_head = cfg.lambda_class * gh
    grads = backward(params, cache, _grad_logits_from_probs(S, grad_S))
    if grad_head is not None:
        grads["head"] = grad_head
    losses["total"] = (losses["ce"] + cfg.lambda_crf * losses["crf"]
                       + cfg.lambda_class * losses["class"])
    return losses, grads


def train(examples: list, cfg: TrainerConfig):
    """Cyclic single-example SGD over a seeded permutation.

    Returns (params, trace) where trace rows are
    (step, loss_total, loss_ce, loss_crf, loss_class) evaluated before
    each update.
    """
    if not examples:
        raise InvalidDataset("no training examples")
    rng = np.random.default_rng(cfg.seed)
    n_classes = cfg.n_classes
    if cfg.lambda_class > 0 and n_classes is None:
        n_classes = max(ex.class_id for ex in examples) + 1
    params = init_params(rng, n_classes if cfg.lambda_class > 0 else None)
    perm = rng.permutation(len(examples))
    feats = [build_features(ex.image, ex.attention) for ex in examples]
    trace = []
    for step in range(cfg.steps):
        ex = examples[perm[step % len(examples)]]
        X = feats[perm[step % len(examples)]]
        labels = ex.labels
        if cfg.resample_k is not None:
            labels = subsample(labels, cfg.resample_k, rng)
        losses, grads = step_gradients(params, X, labels, ex.image,
                                       ex.class_id, cfg)
        if not np.isfinite(losses["total"]):
            raise NumericError(f"non-finite loss at step {step}")
        trace.append((step, losses["total"], losses["ce"],
                      losses["crf"], losses["class"]))
        params.w1 -= cfg.lr * grads["w1"]
        params.b1 -= cfg.lr * grads["b1"]
        params.w2 -= cfg.lr * grads["w2"]
        params.b2 -= cfg.lr * grads["b2"]
        if "head" in grads:
            params.head -= cfg.lr * grads["head"]
    for arr in (params.w1, params.b1, params.w2, params.b2):
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite parameters after training")
    return params, trace


def predict_map(params: LocalizerParams, image, attention) -> np.ndarray:
    """Foreground probability per pixel, [H, W] float64."""
    att = np.asarray(attention)
    X = build_features(image, att)
    S = forward(params, X)["S"]
    return S[:, 1].reshape(att.shape)


def write_trace(trace: list, path) -> None:
    lines = [TRACE_HEADER]
    for step, total, ce, crf, cls in trace:
        lines.append(f"{step},{repr(float(total))},{repr(float(ce))},"
                     f"{repr(float(crf))},{repr(float(cls))}")
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def save_params(params: LocalizerParams, out_dir) -> None:
    """One float32 tensor file per parameter, named after the field."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in PARAM_FILES:
        write_tensor(getattr(params, name).astype(np.float32), out_dir / name)
    if params.head is not None:
        write_tensor(params.head.astype(np.float32), out_dir / "head")


def load_params(in_dir) -> LocalizerParams:
    in_dir = Path(in_dir)
    arrs = {}
    for name in PARAM_FILES:
        arrs[name] = read_tensor(in_dir / name).astype(np.float64)
    if arrs["w1"].shape != (N_FEATURES, HIDDEN) or arrs["w2"].shape != (HIDDEN, 2):
        raise FormatError(f"{in_dir}: checkpoint shapes do not match the model")
    head_path = in_dir / "head"
    head = read_tensor(head_path).astype(np.float64) if head_path.exists() else None
    return LocalizerParams(head=head, **arrs)
