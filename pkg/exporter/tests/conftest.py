import numpy as np
import pytest
import torch
from PIL import Image


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """Tiny seeded ViT classifier saved in HF format; small enough that
    the whole suite stays in the seconds range on cpu."""
    from transformers import ViTConfig, ViTForImageClassification

    cfg = ViTConfig(hidden_size=32, num_hidden_layers=2,
                    num_attention_heads=8, intermediate_size=64,
                    image_size=32, patch_size=8, num_labels=4)
    torch.manual_seed(0)
    model = ViTForImageClassification(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "tiny-vit"
    model.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def smoke_images(tmp_path_factory):
    """Ten 48x48 PNGs split across two class subdirectories."""
    root = tmp_path_factory.mktemp("smoke")
    rng = np.random.default_rng(5)
    for i in range(10):
        sub = root / ("circle" if i < 5 else "square")
        sub.mkdir(exist_ok=True)
        arr = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
        arr[12:36, 12:36] = (255, 32, 32) if i < 5 else (32, 32, 255)
        Image.fromarray(arr).save(sub / f"img{i:02d}.png")
    return root


@pytest.fixture(scope="session")
def exported_corpus(checkpoint, smoke_images, tmp_path_factory):
    """Smoke set run through export_attention once for the whole session."""
    from vitexport.export import ExportJob, export_attention

    out = tmp_path_factory.mktemp("corpus")
    job = ExportJob(model=checkpoint, image_dir=str(smoke_images),
                    out_dir=str(out), resize=32)
    export_attention(job)
    return out
