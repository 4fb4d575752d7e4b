import hashlib
import shutil

import numpy as np
import pytest

from vitexport import ExportError
from vitexport import formats, tensor
from vitexport.export import ExportJob, export_attention


def _hash_tree(root):
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(
                p.read_bytes()).hexdigest()
    return out


def test_manifest_lists_all_images_with_subdir_labels(exported_corpus):
    entries = formats.read_manifest(exported_corpus / "manifest.csv")
    assert len(entries) == 10
    assert [e.image_id for e in entries] == sorted(e.image_id for e in entries)
    for e in entries:
        assert e.label == (0 if e.image_id.startswith("circle") else 1)


def test_attention_stacks_have_head_grid_shape(exported_corpus):
    # 8 heads, 32px input over 8px patches -> 4x4 token grid
    for e in formats.read_manifest(exported_corpus / "manifest.csv"):
        maps = tensor.read_tensor(exported_corpus / e.attention_path)
        assert maps.shape == (8, 4, 4)
        assert maps.dtype == np.float32
        assert np.all(maps > 0) and np.all(maps < 1)
        # cls row of a softmax over 17 tokens: patch mass stays below 1
        assert np.all(maps.reshape(8, -1).sum(axis=1) < 1.0)


def test_images_are_unit_range_float32(exported_corpus):
    for e in formats.read_manifest(exported_corpus / "manifest.csv"):
        img = tensor.read_tensor(exported_corpus / e.image_path)
        assert img.shape == (32, 32, 3)
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0


def test_toolkit_reads_the_exported_corpus(exported_corpus):
    from attnloc import tensorio

    man = tensorio.read_manifest(exported_corpus / "manifest.csv")
    assert len(man.records) == 10
    for rec in man.records:
        assert rec.gt_boxes == []
        assert man.load_attention(rec).shape == (8, 4, 4)
        assert man.load_image(rec).shape == (32, 32, 3)


def test_repeat_export_is_byte_identical(checkpoint, smoke_images, tmp_path):
    jobs = [ExportJob(model=checkpoint, image_dir=str(smoke_images),
                      out_dir=str(tmp_path / f"run{i}"), resize=32)
            for i in range(2)]
    for job in jobs:
        export_attention(job)
    assert _hash_tree(tmp_path / "run0") == _hash_tree(tmp_path / "run1")


def test_undecodable_image_skipped_and_logged(checkpoint, smoke_images,
                                              tmp_path, capsys):
    src = tmp_path / "imgs"
    shutil.copytree(smoke_images / "circle", src / "circle")
    (src / "circle" / "broken.png").write_text("this is not a png")
    job = ExportJob(model=checkpoint, image_dir=str(src),
                    out_dir=str(tmp_path / "out"), resize=32)
    export_attention(job)
    log = (tmp_path / "out" / "skipped.txt").read_text().splitlines()
    assert len(log) == 1 and log[0].startswith("circle/broken.png,")
    assert "broken.png" in capsys.readouterr().err
    entries = formats.read_manifest(tmp_path / "out" / "manifest.csv")
    assert len(entries) == 5
    assert all("broken" not in e.image_id for e in entries)


def test_clean_run_writes_empty_skip_log(exported_corpus):
    assert (exported_corpus / "skipped.txt").read_text() == ""


def test_output_into_input_directory_rejected(checkpoint, smoke_images):
    with pytest.raises(ExportError):
        ExportJob(model=checkpoint, image_dir=str(smoke_images),
                  out_dir=str(smoke_images))


def test_resize_must_fit_patch_grid(checkpoint, smoke_images, tmp_path):
    job = ExportJob(model=checkpoint, image_dir=str(smoke_images),
                    out_dir=str(tmp_path / "o"), resize=30)
    with pytest.raises(ExportError):
        export_attention(job)
