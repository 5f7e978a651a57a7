import numpy as np
import pytest

from nnlfnst.context import NETWORK_SIZES, ContextSpec, adapt_context, extract_context, preprocess
from nnlfnst.nn import architecture, forward
from nnlfnst.predictor import ModelSet, predict_nn


@pytest.fixture(scope="module")
def models():
    return ModelSet([architecture(*s).init_weights(i) for i, s in enumerate(NETWORK_SIZES)])


def test_every_coded_size_has_a_prediction_or_none(models):
    img = np.random.default_rng(0).integers(0, 256, (192, 192))
    for h in (4, 8, 16, 32, 64):
        for w in (4, 8, 16, 32, 64):
            out = predict_nn(img, (64, 64), h, w, models)
            if models.geometry_for(h, w) is None:
                assert out is None
                continue
            assert out.prediction.shape == (h, w)
            assert out.logits.shape == (14,)
            assert out.prediction.min() >= 0 and out.prediction.max() <= 255


def test_prediction_matches_manual_pipeline(models):
    img = np.random.default_rng(1).integers(0, 256, (64, 64))
    out = predict_nn(img, (16, 8), 8, 8, models)
    pre = preprocess(extract_context(img, (16, 8), ContextSpec.for_block(8, 8)), 8)
    m = models[(8, 8)]
    y_c, u, _ = forward(m, m.make_inputs(pre.above[None], pre.left[None]))
    expect = np.clip(np.rint(y_c[0].reshape(8, 8) * 128 + pre.mu), 0, 255)
    assert np.array_equal(out.prediction, expect)
    assert np.array_equal(out.logits, u[0])


def test_transposed_block_uses_transposed_network(models):
    img = np.random.default_rng(2).integers(0, 256, (64, 64))
    out = predict_nn(img, (16, 16), 8, 4, models)
    assert out.geometry.transpose and out.geometry.net == (4, 8)
    direct = predict_nn(img.T, (16, 16), 4, 8, models)
    assert np.array_equal(out.prediction, direct.prediction.T)
    assert np.array_equal(out.logits, direct.logits)
    ctx = adapt_context(extract_context(img, (16, 16), ContextSpec.for_block(8, 4)), out.geometry)
    assert ctx.spec == ContextSpec.for_block(4, 8)


def test_ignores_block_interior(models):
    img = np.random.default_rng(3).integers(0, 256, (64, 64))
    a = predict_nn(img, (16, 16), 16, 16, models)
    img2 = img.copy()
    img2[16:32, 16:32] = 0
    img2[40:, 40:] = 255
    b = predict_nn(img2, (16, 16), 16, 16, models)
    assert np.array_equal(a.prediction, b.prediction)


def test_model_set_rounds_to_storage_and_hashes(models, tmp_path):
    m = architecture(4, 4).init_weights(5)
    ms = ModelSet([m])
    W, _ = ms[(4, 4)].params[1]
    assert np.array_equal(W, W.astype(np.float32).astype(np.float64))
    assert (4, 4) in ms and (8, 8) not in ms
    assert ms.hash64() != models.hash64()
    ms.save(tmp_path)
    assert ModelSet.load(tmp_path).hash64() == ms.hash64()
    assert ModelSet().hash64() == ModelSet.load(tmp_path / "missing").hash64()
