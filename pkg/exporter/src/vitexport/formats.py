"""CSV wire formats shared with the localization toolkit."""

import csv
from dataclasses import dataclass
from pathlib import Path

from . import ExportError

MANIFEST_HEADER = "image_id,image_path,attention_path,label,x0,y0,x1,y1"
BOXES_HEADER = "image_id,proposal_index,x0,y0,x1,y1,source_map"
SCORES_HEADER = "image_id,proposal_index,class_id,score"


@dataclass
class ImageEntry:
    image_id: str
    image_path: str
    attention_path: str
    label: int


def write_manifest(entries, path) -> None:
    """Manifest rows without ground-truth boxes (empty box cells)."""
    lines = [MANIFEST_HEADER]
    for e in entries:
        lines.append(f"{e.image_id},{e.image_path},{e.attention_path},"
                     f"{e.label},,,,")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    """image_id-ordered entries; box columns are ignored here."""
    path = Path(path)
    try:
        rows = list(csv.reader(path.read_text().splitlines()))
    except OSError as e:
        raise ExportError(f"cannot read {path}: {e}") from e
    if not rows or ",".join(rows[0]) != MANIFEST_HEADER:
        raise ExportError(f"{path}: expected header {MANIFEST_HEADER!r}")
    entries = []
    seen = set()
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != 8:
            raise ExportError(f"{path}: expected 8 fields per row")
        if row[0] in seen:  # multi-box images repeat the leading fields
            continue
        seen.add(row[0])
        try:
            entries.append(ImageEntry(row[0], row[1], row[2], int(row[3])))
        except ValueError:
            raise ExportError(f"{path}: bad label for {row[0]}") from None
    return entries


def read_proposal_boxes(path) -> dict:
    """image_id -> list of (x0, y0, x1, y1) in proposal-index order."""
    path = Path(path)
    try:
        rows = list(csv.reader(path.read_text().splitlines()))
    except OSError as e:
        raise ExportError(f"cannot read {path}: {e}") from e
    if not rows or ",".join(rows[0]) != BOXES_HEADER:
        raise ExportError(f"{path}: expected header {BOXES_HEADER!r}")
    boxes: dict = {}
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != 7:
            raise ExportError(f"{path}: expected 7 fields per row")
        try:
            idx = int(row[1])
            coords = tuple(int(v) for v in row[2:6])
        except ValueError:
            raise ExportError(f"{path}: bad row for {row[0]}") from None
        per = boxes.setdefault(row[0], [])
        if idx != len(per):
            raise ExportError(f"{path}: proposal indices for {row[0]} are "
                              "not dense and ordered")
        per.append(coords)
    return boxes


def write_scores(rows, path) -> None:
    """rows: (image_id, proposal_index, class_id, probability)."""
    lines = [SCORES_HEADER]
    for image_id, p_idx, c_idx, score in rows:
        lines.append(f"{image_id},{p_idx},{c_idx},{repr(float(score))}")
    Path(path).write_text("\n".join(lines) + "\n")
