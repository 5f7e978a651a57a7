import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnlfnst.classic import ANGLE, DC, NUM_MODES, PLANAR, predict_classic, wide_angle_remap
from nnlfnst.context import Context, ContextSpec, extract_context


def make_ctx(top, left, corner):
    h, w = len(left), len(top)
    spec = ContextSpec(1, 1, h, w)
    canvas = np.zeros((h + 1, w + 1))
    canvas[0, 0] = corner
    canvas[0, 1:] = top
    canvas[1:, 0] = left
    avail = np.ones_like(canvas, dtype=bool)
    avail[1:, 1:] = False
    return Context(spec, canvas, avail)


SIZES = [(4, 4), (4, 8), (8, 4), (8, 8), (16, 4), (4, 32), (32, 32), (64, 64), (16, 64)]


@pytest.mark.parametrize("h,w", SIZES)
def test_constant_context_gives_constant_block(h, w):
    ctx = make_ctx(np.full(w, 93), np.full(h, 93), 93)
    for mode in range(NUM_MODES):
        p = predict_classic(ctx, mode, h, w)
        assert p.shape == (h, w) and p.dtype == np.int64
        assert np.all(p == 93), mode


@pytest.mark.parametrize("h,w", SIZES)
def test_pure_vertical_and_horizontal(h, w):
    rng = np.random.default_rng(h * w)
    top = rng.integers(0, 256, w)
    left = rng.integers(0, 256, h)
    ctx = make_ctx(top, left, 5)
    assert np.array_equal(predict_classic(ctx, 50, h, w), np.tile(top, (h, 1)))
    assert np.array_equal(predict_classic(ctx, 18, h, w), np.tile(left[:, None], (1, w)))


def test_dc_rules():
    top = np.array([10, 20, 30, 40, 50, 60, 70, 80])
    left = np.array([1, 2, 3, 4])
    assert np.all(predict_classic(make_ctx(top, left, 0), DC, 4, 8) == (360 + 4) >> 3)
    assert np.all(predict_classic(make_ctx(top[:4], top[4:], 0), DC, 4, 4) == (360 + 4) >> 3)
    assert np.all(predict_classic(make_ctx(left, top, 0), DC, 8, 4) == (360 + 4) >> 3)


def test_planar_reproduces_bilinear_oracle():
    rng = np.random.default_rng(1)
    for h, w in [(4, 4), (8, 16), (32, 8)]:
        top = rng.integers(0, 256, w)
        left = rng.integers(0, 256, h)
        p = predict_classic(make_ctx(top, left, 0), PLANAR, h, w)
        expect = np.empty((h, w), dtype=np.int64)
        for y in range(h):
            for x in range(w):
                v = (h - 1 - y) * top[x] + (y + 1) * left[h - 1]
                hz = (w - 1 - x) * left[y] + (x + 1) * top[w - 1]
                expect[y, x] = (v * w + hz * h + w * h) // (2 * w * h)
        assert np.array_equal(p, expect)


def test_diagonal_modes_copy_references():
    rng = np.random.default_rng(2)
    n = 8
    top = rng.integers(0, 256, n)
    left = rng.integers(0, 256, n)
    corner = 77
    ctx = make_ctx(top, left, corner)
    p66 = predict_classic(ctx, 66, n, n)
    p2 = predict_classic(ctx, 2, n, n)
    p34 = predict_classic(ctx, 34, n, n)
    for y in range(n):
        for x in range(n):
            assert p66[y, x] == top[min(x + y + 1, n - 1)]
            assert p2[y, x] == left[min(x + y + 1, n - 1)]
            if x == y:
                assert p34[y, x] == corner
            elif x > y:
                assert p34[y, x] == top[x - y - 1]
            else:
                assert p34[y, x] == left[y - x - 1]


def test_horizontal_class_is_transpose_of_vertical_class():
    rng = np.random.default_rng(3)
    top = rng.integers(0, 256, 8)
    left = rng.integers(0, 256, 8)
    a = make_ctx(top, left, 40)
    b = make_ctx(left, top, 40)
    for mode in range(2, 67):
        mirror = 68 - mode
        assert np.array_equal(predict_classic(a, mode, 8, 8), predict_classic(b, mirror, 8, 8).T)


def test_wide_angle_remap():
    assert wide_angle_remap(2, 4, 8) == 67
    assert wide_angle_remap(7, 4, 8) == 72
    assert wide_angle_remap(8, 4, 8) == 8
    assert wide_angle_remap(11, 4, 16) == 76
    assert wide_angle_remap(12, 4, 16) == 12
    assert wide_angle_remap(66, 8, 4) == -1
    assert wide_angle_remap(61, 8, 4) == -6
    assert wide_angle_remap(60, 8, 4) == 60
    assert wide_angle_remap(57, 16, 4) == -10
    assert wide_angle_remap(56, 16, 4) == 56
    assert wide_angle_remap(66, 8, 8) == 66
    assert wide_angle_remap(0, 4, 32) == 0
    with pytest.raises(ValueError):
        wide_angle_remap(67, 4, 4)


def test_remap_range_covers_angle_table():
    for h in (4, 8, 16, 32, 64):
        for w in (4, 8, 16, 32, 64):
            for mode in range(2, NUM_MODES):
                assert wide_angle_remap(mode, h, w) in ANGLE


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SIZES), st.integers(0, NUM_MODES - 1), st.integers(0, 2**31))
def test_prediction_within_reference_range(size, mode, seed):
    h, w = size
    rng = np.random.default_rng(seed)
    top = rng.integers(0, 256, w)
    left = rng.integers(0, 256, h)
    corner = int(rng.integers(0, 256))
    p = predict_classic(make_ctx(top, left, corner), mode, h, w)
    refs = np.concatenate([top, left, [corner]])
    assert p.min() >= refs.min() and p.max() <= refs.max()


def test_works_on_extracted_context():
    img = np.random.default_rng(4).integers(0, 256, size=(32, 32))
    ctx = extract_context(img, (8, 8), ContextSpec(1, 1, 8, 8))
    p = predict_classic(ctx, 50, 8, 8)
    assert np.array_equal(p, np.tile(img[7, 8:16], (8, 1)))
