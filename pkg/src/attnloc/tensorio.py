"""Binary tensor container, dataset manifests, and the synthetic corpus.

The on-disk tensor format is deliberately tiny: magic ``TNSR``, a
one-byte version (1), a one-byte dtype code (1 = float32, 2 = uint8), a
one-byte rank in 1..4, rank little-endian u32 extents, then the
row-major payload, little-endian throughout. Readers are strict: any
malformed header, truncated payload, or trailing bytes raises
FormatError rather than guessing.
"""

import csv
import math
import colorsys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import FormatError, InvalidInput, InvalidParam, IoError
from .segment import BBox

MAGIC = b"TNSR"
VERSION = 1
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("u1")}
_CODES_BY_KIND = {"f": 1, "u": 2}

MANIFEST_HEADER = "image_id,image_path,attention_path,label,x0,y0,x1,y1"


def write_tensor(arr: np.ndarray, path) -> None:
    arr = np.asarray(arr)
    if arr.dtype == np.float32:
        code = 1
    elif arr.dtype == np.uint8:
        code = 2
    else:
        raise InvalidInput(f"unsupported dtype {arr.dtype}; use float32 or uint8")
    if not 1 <= arr.ndim <= 4:
        raise InvalidInput(f"rank {arr.ndim} outside 1..4")
    if any(e < 1 for e in arr.shape):
        raise InvalidInput(f"zero extent in shape {arr.shape}")
    header = MAGIC + bytes([VERSION, code, arr.ndim])
    header += b"".join(int(e).to_bytes(4, "little") for e in arr.shape)
    payload = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(payload)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def read_tensor(path) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if len(data) < 7:
        raise FormatError(f"{path}: truncated header")
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    if data[4] != VERSION:
        raise FormatError(f"{path}: unsupported version {data[4]}")
    dtype = _DTYPE_CODES.get(data[5])
    if dtype is None:
        raise FormatError(f"{path}: unknown dtype code {data[5]}")
    ndim = data[6]
    if not 1 <= ndim <= 4:
        raise FormatError(f"{path}: rank {ndim} outside 1..4")
    off = 7 + 4 * ndim
    if len(data) < off:
        raise FormatError(f"{path}: truncated extents")
    shape = tuple(int.from_bytes(data[7 + 4 * i:11 + 4 * i], "little")
                  for i in range(ndim))
    if any(e < 1 for e in shape):
        raise FormatError(f"{path}: zero extent in shape {shape}")
    count = math.prod(shape)
    expect = off + count * dtype.itemsize
    if len(data) != expect:
        raise FormatError(
            f"{path}: payload is {len(data) - off} bytes, expected {expect - off}")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
    return arr.reshape(shape).astype(dtype.newbyteorder("="), copy=True)


@dataclass
class ManifestRecord:
    image_id: str
    image_path: str
    attention_path: str
    label: int
    gt_boxes: list = field(default_factory=list)


class Manifest:
    """Ordered image records plus the directory paths resolve against."""

    def __init__(self, records: list, root):
        self.records = records
        self.root = Path(root)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def load_image(self, rec: ManifestRecord) -> np.ndarray:
        arr = read_tensor(self.root / rec.image_path)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.float32:
            raise FormatError(f"{rec.image_path}: expected float32 [H, W, 3]")
        return arr

    def load_attention(self, rec: ManifestRecord) -> np.ndarray:
        arr = read_tensor(self.root / rec.attention_path)
        if arr.ndim != 3 or arr.dtype != np.float32:
            raise FormatError(f"{rec.attention_path}: expected float32 [K, h, w]")
        return arr


def write_manifest(records: list, path) -> None:
    lines = [MANIFEST_HEADER]
    for rec in records:
        base = f"{rec.image_id},{rec.image_path},{rec.attention_path},{rec.label}"
        if rec.gt_boxes:
            for b in rec.gt_boxes:
                lines.append(f"{base},{b.x0},{b.y0},{b.x1},{b.y1}")
        else:
            lines.append(base + ",,,,")
    try:
        with open(path, "w", newline="") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def read_manifest(path) -> Manifest:
    path = Path(path)
    try:
        with open(path, "r", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if not rows or ",".join(rows[0]) != MANIFEST_HEADER:
        raise FormatError(f"{path}: bad or missing header")
    by_id: dict = {}
    order = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 8:
            raise FormatError(f"{path}:{lineno}: expected 8 fields, got {len(row)}")
        image_id, image_path, attention_path, label_s = row[:4]
        box_cells = row[4:]
        try:
            label = int(label_s)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad label {label_s!r}") from None
        filled = [c != "" for c in box_cells]
        if any(filled) and not all(filled):
            raise FormatError(f"{path}:{lineno}: partially filled box")
        box = None
        if all(filled):
            try:
                x0, y0, x1, y1 = (int(c) for c in box_cells)
                box = BBox(x0, y0, x1, y1)
            except (ValueError, InvalidInput) as e:
                raise FormatError(f"{path}:{lineno}: bad box: {e}") from None
        rec = by_id.get(image_id)
        if rec is None:
            rec = ManifestRecord(image_id, image_path, attention_path, label)
            by_id[image_id] = rec
            order.append(rec)
        elif (rec.image_path, rec.attention_path, rec.label) != (
                image_path, attention_path, label):
            raise FormatError(f"{path}:{lineno}: conflicting rows for {image_id}")
        if box is not None:
            rec.gt_boxes.append(box)
    return Manifest(order, path.parent)


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass
class SynthConfig:
    n_images: int = 64
    image_size: tuple = (64, 64)
    n_classes: int = 4
    n_heads: int = 6
    noise_sigma: float = 0.15
    distractor_prob: float = 0.25
    rng_seed: int = 0

    def __post_init__(self):
        h, w = self.image_size
        if self.n_images < 0:
            raise InvalidParam("n_images must be >= 0")
        if h < 16 or w < 16:
            raise InvalidParam("image_size must be at least 16 x 16")
        if self.n_classes < 2:
            raise InvalidParam("n_classes must be >= 2")
        if self.n_heads < 5:
            raise InvalidParam("n_heads must be >= 5")
        if self.noise_sigma < 0:
            raise InvalidParam("noise_sigma must be >= 0")
        if not 0.0 <= self.distractor_prob <= 1.0:
            raise InvalidParam("distractor_prob must lie in [0, 1]")


def _palette(n_buckets: int) -> np.ndarray:
    cols = [colorsys.hsv_to_rgb(i / n_buckets, 0.9, 0.9) for i in range(n_buckets)]
    return np.array(cols)


def _blur2d(m: np.ndarray, sigma: float) -> np.ndarray:
    r = int(math.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    k /= k.sum()
    out = _kernels.convolve1d_clamp(np.asarray(m, dtype=np.float64), k, 0)
    return _kernels.convolve1d_clamp(out, k, 1)


def _norm01(m: np.ndarray) -> np.ndarray:
    lo, hi = m.min(), m.max()
    if hi - lo <= 0:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def generate_synthetic(cfg: SynthConfig, out_dir) -> Manifest:
    """Render a labeled toy corpus with ground-truth boxes and plausible
    attention stacks.

    Classes map onto color buckets crossed with a shape bit
    (rectangle / ellipse), so a handful of classes stay separable by a
    low-capacity scorer. Attention heads share a mask-derived base map
    plus per-head noise; occasionally one head gains an off-object
    distractor blob, mimicking the unreliable-head failure mode the
    candidate-map construction has to survive.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "attn").mkdir(parents=True, exist_ok=True)
    H, W = cfg.image_size
    K = cfg.n_heads
    ah, aw = max(4, H // 4), max(4, W // 4)
    n_buckets = max(2, math.ceil(cfg.n_classes / 2))
    palette = _palette(n_buckets)
    rng = np.random.default_rng(cfg.rng_seed)

    yy, xx = np.mgrid[0:H, 0:W]
    records = []
    for i in range(cfg.n_images):
        img_id = f"{i:05d}"
        class_id = int(rng.integers(cfg.n_classes))
        bucket = class_id % n_buckets
        use_ellipse = (class_id // n_buckets) % 2 == 1

        obj_h = max(4, int(round(float(rng.uniform(0.25, 0.45)) * H)))
        obj_w = max(4, int(round(float(rng.uniform(0.25, 0.45)) * W)))
        y0 = int(rng.integers(2, H - 2 - obj_h + 1))
        x0 = int(rng.integers(2, W - 2 - obj_w + 1))

        if use_ellipse:
            cy, cx = y0 + (obj_h - 1) / 2.0, x0 + (obj_w - 1) / 2.0
            ry, rx = obj_h / 2.0, obj_w / 2.0
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = np.zeros((H, W), dtype=bool)
            mask[y0:y0 + obj_h, x0:x0 + obj_w] = True
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        gt = BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)

        coarse = rng.random((max(2, H // 8), max(2, W // 8), 3))
        bg = np.stack([_kernels.bilinear_resize(coarse[:, :, c], H, W)
                       for c in range(3)], axis=2)
        img = 0.08 + 0.37 * bg
        color = palette[bucket] + rng.normal(0.0, 0.03, 3)
        img[mask] = color
        img += rng.normal(0.0, 0.02, (H, W, 3))
        img = np.clip(img, 0.0, 1.0)

        base = _blur2d(_kernels.bilinear_resize(mask.astype(np.float64), ah, aw), 0.8)
        base = _norm01(base)
        heads = base[None, :, :] + rng.normal(0.0, cfg.noise_sigma, (K, ah, aw))
        if float(rng.random()) < cfg.distractor_prob:
            k_idx = int(rng.integers(K))
            # drop the blob somewhere the object is not
            att_box = (gt.y0 * ah // H, gt.x0 * aw // W,
                       -(-gt.y1 * ah // H), -(-gt.x1 * aw // W))
            inside = np.zeros((ah, aw), dtype=bool)
            inside[att_box[0]:att_box[2], att_box[1]:att_box[3]] = True
            allowed = np.argwhere(~inside)
            if allowed.size:
                cy_b, cx_b = allowed[int(rng.integers(len(allowed)))]
                amp = float(rng.uniform(0.6, 1.0))
                sig_b = max(1.5, min(ah, aw) / 8.0)
                gy, gx = np.mgrid[0:ah, 0:aw]
                d2 = (gy - cy_b) ** 2.0 + (gx - cx_b) ** 2.0
                heads[k_idx] += amp * np.exp(-d2 / (2.0 * sig_b * sig_b))
        for k in range(K):
            heads[k] = _norm01(heads[k])

        img_rel = f"images/{img_id}.tnsr"
        att_rel = f"attn/{img_id}.tnsr"
        write_tensor(img.astype(np.float32), out_dir / img_rel)
        write_tensor(heads.astype(np.float32), out_dir / att_rel)
        records.append(ManifestRecord(img_id, img_rel, att_rel, class_id, [gt]))

    write_manifest(records, out_dir / "manifest.csv")
    return Manifest(records, out_dir)
