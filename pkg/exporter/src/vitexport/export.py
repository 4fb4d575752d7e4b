"""Attention and score export around a pretrained ViT checkpoint.

``export_attention`` turns an image directory into the toolkit's corpus
layout (TNSR images, TNSR [K, h, w] attention stacks, manifest CSV).
``export_scores`` replays the toolkit's blur-composite rule over a
proposal-boxes CSV and emits classifier softmax scores per proposal.
"""

import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from . import ExportError
from .formats import (ImageEntry, read_manifest, read_proposal_boxes,
                      write_manifest, write_scores)
from .tensor import read_tensor, write_tensor


@dataclass
class ExportJob:
    model: str            # checkpoint directory (or hub id for real runs)
    image_dir: str
    out_dir: str
    resize: int = 224
    device: str = "cpu"
    batch_size: int = 16
    sigma: float = None   # blur width; None = min(H, W)/8 like the toolkit

    def __post_init__(self):
        if Path(self.out_dir).resolve() == Path(self.image_dir).resolve():
            raise ExportError("output directory must differ from image directory")
        if self.resize < 1 or self.batch_size < 1:
            raise ExportError("resize and batch_size must be positive")


def _load_backbone(job: ExportJob):
    from transformers import AutoModel

    # eager attention so attention probabilities are actually materialized;
    # no pooler: it is unused here and would be randomly initialized
    model = AutoModel.from_pretrained(job.model, attn_implementation="eager",
                                      add_pooling_layer=False)
    model.to(job.device).eval()
    return model


def _load_classifier(job: ExportJob):
    from transformers import AutoModelForImageClassification

    model = AutoModelForImageClassification.from_pretrained(
        job.model, attn_implementation="eager")
    model.to(job.device).eval()
    return model


def _grid_side(config, resize: int) -> int:
    patch = config.patch_size
    if resize % patch:
        raise ExportError(f"resize {resize} not a multiple of patch {patch}")
    return resize // patch


def _to_pixel_values(arrs, device):
    # [B, H, W, 3] in [0, 1] -> normalized [B, 3, H, W]
    x = torch.from_numpy(np.stack(arrs)).permute(0, 3, 1, 2)
    return ((x - 0.5) / 0.5).to(device)


def _decode(path: Path, resize: int):
    try:
        with Image.open(path) as im:
            im = im.convert("RGB").resize((resize, resize), Image.BILINEAR)
            return np.asarray(im, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as e:
        return str(e) or type(e).__name__


def _collect_images(image_dir: Path):
    """(relative path, class label) per candidate file; labels come from
    first-level subdirectories sorted by name, flat files get label 0."""
    files = sorted(p for p in image_dir.rglob("*") if p.is_file())
    classes = sorted({p.relative_to(image_dir).parts[0] for p in files
                      if len(p.relative_to(image_dir).parts) > 1})
    out = []
    for p in files:
        rel = p.relative_to(image_dir)
        label = classes.index(rel.parts[0]) if len(rel.parts) > 1 else 0
        out.append((rel, label))
    return out


def export_attention(job: ExportJob) -> Path:
    """Write images, per-head [cls] attention stacks, the manifest, and a
    skip log under job.out_dir; returns the manifest path."""
    image_dir = Path(job.image_dir)
    out = Path(job.out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "attention").mkdir(parents=True, exist_ok=True)
    model = _load_backbone(job)
    g = _grid_side(model.config, job.resize)
    interp = job.resize != model.config.image_size

    decoded, skipped = [], []
    for rel, label in _collect_images(image_dir):
        arr = _decode(image_dir / rel, job.resize)
        if isinstance(arr, str):
            skipped.append(f"{rel},{arr}")
            print(f"warning: skipping undecodable {rel}: {arr}", file=sys.stderr)
            continue
        image_id = "_".join(rel.parts)
        image_id = image_id[:image_id.rfind(".")] if "." in image_id else image_id
        decoded.append((image_id, label, arr))
    ids = [d[0] for d in decoded]
    if len(set(ids)) != len(ids):
        raise ExportError("image ids collide after flattening paths")

    entries = []
    with torch.no_grad():
        for lo in range(0, len(decoded), job.batch_size):
            chunk = decoded[lo:lo + job.batch_size]
            px = _to_pixel_values([c[2] for c in chunk], job.device)
            outputs = model(pixel_values=px, output_attentions=True,
                            interpolate_pos_encoding=interp)
            attn = outputs.attentions[-1]          # [B, K, 1+N, 1+N]
            if attn.shape[-1] != 1 + g * g:
                raise ExportError(
                    f"unexpected token count {attn.shape[-1]} for grid {g}x{g}")
            cls_maps = attn[:, :, 0, 1:].reshape(len(chunk), -1, g, g)
            cls_maps = cls_maps.cpu().numpy().astype(np.float32)
            for (image_id, label, arr), maps in zip(chunk, cls_maps):
                write_tensor(arr, out / "images" / image_id)
                write_tensor(maps, out / "attention" / image_id)
                entries.append(ImageEntry(
                    image_id=image_id, image_path=f"images/{image_id}",
                    attention_path=f"attention/{image_id}", label=label))
    write_manifest(entries, out / "manifest.csv")
    (out / "skipped.txt").write_text(
        "\n".join(skipped) + "\n" if skipped else "")
    return out / "manifest.csv"


def _gaussian_kernel(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ExportError(f"sigma must be positive, got {sigma}")
    r = int(math.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable blur, clamp-to-edge borders, f64 accumulation, f32 out;
    the same composite rule the toolkit applies before scoring."""
    k = _gaussian_kernel(sigma)
    r = k.size // 2
    acc = image.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * 3
        pad[axis] = (r, r)
        padded = np.pad(acc, pad, mode="edge")
        acc = np.zeros_like(acc)
        for i, kv in enumerate(k):
            sl = [slice(None)] * 3
            sl[axis] = slice(i, i + image.shape[axis])
            acc += kv * padded[tuple(sl)]
    return acc.astype(np.float32)


def composite(image: np.ndarray, box, sigma: float = None) -> np.ndarray:
    """Original pixels inside the half-open box, blurred copy outside."""
    H, W = image.shape[:2]
    x0, y0, x1, y1 = box
    if not (0 <= x0 < x1 <= W and 0 <= y0 < y1 <= H):
        raise ExportError(f"box {box} outside {W}x{H} image")
    if sigma is None:
        sigma = min(H, W) / 8.0
    comp = gaussian_blur(image, sigma)
    comp[y0:y1, x0:x1] = image[y0:y1, x0:x1]
    return comp


def export_scores(job: ExportJob, proposals_path, manifest_path=None) -> Path:
    """Score every proposal composite with the checkpoint's classifier;
    writes scores.csv in the toolkit's format under job.out_dir."""
    manifest_path = Path(manifest_path if manifest_path
                         else Path(job.image_dir) / "manifest.csv")
    entries = read_manifest(manifest_path)
    boxes = read_proposal_boxes(proposals_path)
    model = _load_classifier(job)
    n_classes = model.config.num_labels
    top = max((e.label for e in entries), default=0)
    if top + 1 > n_classes:
        raise ExportError(f"manifest labels need {top + 1} classes but the "
                          f"classifier has {n_classes}")
    interp = job.resize != model.config.image_size
    _grid_side(model.config, job.resize)

    out = Path(job.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    with torch.no_grad():
        for e in entries:
            if e.image_id not in boxes:
                continue
            img = read_tensor(manifest_path.parent / e.image_path)
            if img.ndim != 3 or img.shape[2] != 3:
                raise ExportError(f"{e.image_path}: expected [H, W, 3] image")
            comps = [composite(img, b, job.sigma) for b in boxes[e.image_id]]
            probs = []
            for lo in range(0, len(comps), job.batch_size):
                px = _to_pixel_values(comps[lo:lo + job.batch_size], job.device)
                if px.shape[-1] != job.resize:
                    px = torch.nn.functional.interpolate(
                        px, size=(job.resize, job.resize), mode="bilinear",
                        align_corners=False)
                logits = model(pixel_values=px,
                               interpolate_pos_encoding=interp).logits
                probs.append(torch.softmax(logits.double(), dim=1).cpu().numpy())
            table = np.concatenate(probs)
            for p_idx in range(table.shape[0]):
                for c_idx in range(n_classes):
                    rows.append((e.image_id, p_idx, c_idx, table[p_idx, c_idx]))
    write_scores(rows, out / "scores.csv")
    return out / "scores.csv"
