"""Backend parity: the compiled kernels must match the pure fallback."""

import numpy as np
import pytest

from attnloc._kernels import pure

try:
    from attnloc._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled kernels absent")


def _random_masks(rng, n, h, w):
    for _ in range(n):
        yield (rng.random((h, w)) > rng.uniform(0.3, 0.8)).astype(np.uint8)


@needs_core
def test_label_parity(rng):
    for mask in _random_masks(rng, 200, 24, 31):
        for conn in (4, 8):
            a = pure.label_components(mask, conn)
            b = _core.label_components(mask, conn)
            assert np.array_equal(a, b)


@needs_core
def test_convolve_parity(rng):
    for _ in range(50):
        img = rng.standard_normal((int(rng.integers(1, 40)),
                                   int(rng.integers(1, 40))))
        r = int(rng.integers(0, 6))
        k = rng.random(2 * r + 1) + 0.01
        k /= k.sum()
        for axis in (0, 1):
            a = pure.convolve1d_clamp(img, k, axis)
            b = _core.convolve1d_clamp(img, k, axis)
            assert np.allclose(a, b, rtol=0, atol=1e-12)


@needs_core
def test_resize_parity(rng):
    for _ in range(50):
        src = rng.random((int(rng.integers(1, 20)), int(rng.integers(1, 20))))
        oh, ow = int(rng.integers(1, 40)), int(rng.integers(1, 40))
        a = pure.bilinear_resize(src, oh, ow)
        b = _core.bilinear_resize(src, oh, ow)
        assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_label_values_contiguous(rng):
    mask = (rng.random((30, 30)) > 0.7).astype(np.uint8)
    lab = pure.label_components(mask, 8)
    ids = np.unique(lab)
    assert ids[0] == 0 or mask.all()
    fg = ids[ids > 0]
    assert np.array_equal(fg, np.arange(1, fg.size + 1))


def test_resize_identity(rng):
    src = rng.random((7, 9))
    assert np.array_equal(pure.bilinear_resize(src, 7, 9), src)


def test_resize_never_extrapolates(rng):
    for _ in range(50):
        src = rng.random((5, 5)) * 10 - 5
        out = pure.bilinear_resize(src, 17, 23)
        assert out.min() >= src.min() - 1e-12
        assert out.max() <= src.max() + 1e-12
