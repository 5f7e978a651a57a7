import numpy as np
import pytest
from PIL import Image

from nnlfnst.corpus import (HELD_OUT_NAMES, NATURAL_NAMES, SYNTHETIC_KINDS, load_directory,
                            mixed_corpus, natural_image, read_image, read_pgm, read_raw,
                            synthetic_image, to_luma, write_pgm)


def test_pgm_roundtrip_8_and_16_bit(tmp_path):
    a = np.random.default_rng(0).integers(0, 256, (7, 11))
    write_pgm(tmp_path / "a.pgm", a)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), a)
    b = np.random.default_rng(1).integers(0, 1024, (5, 3))
    write_pgm(tmp_path / "b.pgm", b, bitdepth=10)
    assert np.array_equal(read_pgm(tmp_path / "b.pgm"), b)


def test_pgm_with_comment_and_wrong_magic(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 2\n255\n\x01\x02\x03\x04")
    assert read_pgm(p).tolist() == [[1, 2], [3, 4]]
    q = tmp_path / "d.pgm"
    q.write_bytes(b"P2\n2 2\n255\n1 2 3 4\n")
    with pytest.raises(ValueError):
        read_pgm(q)


def test_raw_and_png(tmp_path):
    a = np.arange(12, dtype=np.uint8).reshape(3, 4)
    a.tofile(tmp_path / "x.raw")
    assert np.array_equal(read_raw(tmp_path / "x.raw", 4, 3), a)
    assert np.array_equal(read_image(tmp_path / "x.raw", 4, 3), a)
    with pytest.raises(ValueError):
        read_image(tmp_path / "x.raw")
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[..., 1] = 200
    Image.fromarray(rgb).save(tmp_path / "g.png")
    assert np.all(read_image(tmp_path / "g.png") == round(200 * 0.587))


def test_to_luma_rescales_float_input():
    f = np.array([[0.0, 0.5], [1.0, 0.25]])
    assert to_luma(f).tolist() == [[0, 128], [255, 64]]


def test_load_directory(tmp_path):
    write_pgm(tmp_path / "b.pgm", np.zeros((4, 4), dtype=int))
    write_pgm(tmp_path / "a.pgm", np.ones((4, 4), dtype=int))
    (tmp_path / "notes.txt").write_text("skip me")
    d = load_directory(tmp_path)
    assert list(d) == ["a", "b"]


@pytest.mark.parametrize("kind", SYNTHETIC_KINDS)
def test_synthetic_images_deterministic_8_bit(kind):
    a = synthetic_image(kind, 24, 40, 3)
    assert a.shape == (24, 40) and a.dtype == np.int64
    assert a.min() >= 0 and a.max() <= 255
    assert np.array_equal(a, synthetic_image(kind, 24, 40, 3))
    with pytest.raises(ValueError):
        synthetic_image("plaid", 4, 4)


def test_natural_corpus_and_split():
    assert set(HELD_OUT_NAMES) <= set(NATURAL_NAMES)
    assert len(set(NATURAL_NAMES)) == len(NATURAL_NAMES)
    img = natural_image("camera")
    assert img.shape == (512, 512) and img.max() <= 255


def test_mixed_corpus_is_deterministic():
    imgs = mixed_corpus(6, 32, 32, seed=2)
    assert len(imgs) == 6 and all(i.shape == (32, 32) for i in imgs)
    again = mixed_corpus(6, 32, 32, seed=2)
    assert all(np.array_equal(a, b) for a, b in zip(imgs, again))
