import numpy as np
import pytest

from attnloc import attention
from attnloc.errors import InsufficientHeads, InvalidInput


def test_identical_heads_collapse(rng):
    m = rng.random((4, 5))
    stack = np.stack([m] * 7)
    cand = attention.candidate_maps(stack)
    norm = (m - m.min()) / (m.max() - m.min())
    for k in range(5):
        assert np.allclose(cand[k], norm, atol=1e-12)


def test_constant_planes_all_zero():
    stack = np.stack([np.full((3, 3), float(v)) for v in range(6)])
    cand = attention.candidate_maps(stack)
    # each head constant, and the mean plane 2.5 is constant too
    assert np.array_equal(cand, np.zeros((5, 3, 3)))


def test_mean_map_matches_recompute(rng):
    stack = rng.random((5, 6, 8))
    cand = attention.candidate_maps(stack)
    mean = stack.mean(axis=0)
    expect = (mean - mean.min()) / (mean.max() - mean.min())
    assert np.allclose(cand[attention.MEAN_MAP_INDEX], expect, atol=1e-6)


def test_affine_invariance(rng):
    stack = rng.random((6, 7, 7))
    a = attention.candidate_maps(stack)
    b = attention.candidate_maps(3.7 * stack + 11.0)
    assert np.allclose(a, b, atol=1e-9)


def test_head_order_preserved(rng):
    stack = rng.random((6, 4, 4))
    cand = attention.candidate_maps(stack)
    for k in range(4):
        assert np.allclose(cand[k], attention.normalize_map(stack[k]))


def test_too_few_heads(rng):
    with pytest.raises(InsufficientHeads):
        attention.candidate_maps(rng.random((4, 4, 4)))


def test_non_finite_rejected(rng):
    stack = rng.random((5, 4, 4))
    stack[2, 1, 1] = np.nan
    with pytest.raises(InvalidInput):
        attention.candidate_maps(stack)


def test_upsample_identity(rng):
    m = rng.random((5, 6))
    assert np.array_equal(attention.upsample_map(m, 5, 6), m)


def test_upsample_constant_1x1():
    out = attention.upsample_map(np.array([[0.7]]), 4, 5)
    assert np.array_equal(out, np.full((4, 5), 0.7))


def test_upsample_hand_case():
    m = np.array([[0.0, 1.0], [0.0, 1.0]])
    out = attention.upsample_map(m, 2, 3)
    assert np.allclose(out[:, 1], 0.5)
    assert np.allclose(out[:, 0], 0.0)
    assert np.allclose(out[:, 2], 1.0)


def test_upsample_stays_in_range(rng):
    m = rng.random((3, 4))
    out = attention.upsample_map(m, 50, 60)
    assert out.min() >= m.min() and out.max() <= m.max()


def test_pool_bounds_cover_source():
    # floor/ceil bounds: blocks may overlap when g does not divide n,
    # but they are nonempty, ordered, and leave no gaps
    for n, g in ((10, 3), (7, 7), (5, 2), (64, 32)):
        bounds = attention.pool_bounds(n, g)
        assert len(bounds) == g
        assert bounds[0][0] == 0 and bounds[-1][1] == n
        for i, (lo, hi) in enumerate(bounds):
            assert lo == i * n // g
            assert hi == -((i + 1) * n // -g)
            assert hi > lo
        for (a0, a1), (b0, b1) in zip(bounds, bounds[1:]):
            assert b0 <= a1 and b0 >= a0 and b1 >= a1


def test_pool_bounds_exact_tiling_when_divisible():
    bounds = attention.pool_bounds(12, 4)
    assert bounds == [(0, 3), (3, 6), (6, 9), (9, 12)]


def test_adaptive_avg_pool_means():
    m = np.arange(16, dtype=np.float64).reshape(4, 4)
    out = attention.adaptive_avg_pool(m, 2, 2)
    assert np.array_equal(out, np.array([[2.5, 4.5], [10.5, 12.5]]))
