import numpy as np
import pytest

from attnloc import tensorio


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """12-image 4-class corpus shared by pipeline-level tests."""
    root = tmp_path_factory.mktemp("corpus")
    cfg = tensorio.SynthConfig(n_images=12, rng_seed=7)
    manifest = tensorio.generate_synthetic(cfg, root)
    return manifest


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
