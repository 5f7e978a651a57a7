import numpy as np
import pytest

from nnlfnst.context import NETWORK_SIZES, ContextSpec
from nnlfnst.nn import (Adam, LayerSpec, Model, ShapeError, StaleCacheError, architecture, backward,
                        conv, fc, flatten, forward, leaky_relu, models_hash)
from oracles import fd_check, linear_objective, loss_objective, random_graph

PARAM_COUNTS = {(4, 4): 1_536_030, (4, 8): 1_574_446, (4, 16): 1_651_278, (4, 32): 1_804_942,
                (8, 8): 1_766_478, (8, 16): 1_920_142, (16, 16): 1_000_282, (32, 32): 2_856_206}


def conv_oracle(x, W, b, stride):
    """Direct SAME-padded strided cross-correlation."""
    n, c, hh, ww = x.shape
    cout, _, fh, fw = W.shape
    sh, sw = stride
    ho, wo = -(-hh // sh), -(-ww // sw)
    pad_h = max((ho - 1) * sh + fh - hh, 0)
    pad_w = max((wo - 1) * sw + fw - ww, 0)
    xp = np.pad(x, ((0, 0), (0, 0), (pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)))
    out = np.zeros((n, cout, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * sh:i * sh + fh, j * sw:j * sw + fw]
            out[:, :, i, j] = np.einsum("ncij,ocij->no", patch, W) + b
    return out


@pytest.mark.parametrize("size", NETWORK_SIZES)
def test_parameter_counts(size):
    assert architecture(*size).num_parameters() == PARAM_COUNTS[size]


@pytest.mark.parametrize("size", NETWORK_SIZES)
def test_architecture_io_shapes(size):
    h, w = size
    m = architecture(h, w).init_weights(1)
    spec = ContextSpec.for_block(h, w)
    rng = np.random.default_rng(0)
    above = rng.normal(size=(3, spec.n_a, spec.n_l + w))
    left = rng.normal(size=(3, h, spec.n_l))
    y, u, _ = forward(m, m.make_inputs(above, left))
    assert y.shape == (3, h * w)
    assert u.shape == (3, 14)


def test_no_network_for_unsupported_size():
    with pytest.raises(ValueError):
        architecture(8, 4)


@pytest.mark.parametrize("stride", [(1, 1), (1, 2), (2, 1), (2, 2)])
@pytest.mark.parametrize("hw", [(4, 8), (5, 7), (8, 16)])
def test_conv_forward_matches_direct_oracle(stride, hw):
    rng = np.random.default_rng(hash((stride, hw)) % 2**32)
    x = rng.normal(size=(2, 3, *hw))
    m = Model([conv(["X0"], 4, stride), flatten(1), fc([2], 14)], {"X0": (3, *hw)}, 2, 3)
    m.init_weights(3)
    m.params[1] = (m.params[1][0], rng.normal(size=4))
    _, _, cache = forward(m, {"X0": x})
    W, b = m.params[1]
    expect = leaky_relu(conv_oracle(x, W, b, stride))
    assert np.max(np.abs(cache.outputs[1] - expect)) < 1e-12


@pytest.mark.parametrize("seed", range(100))
def test_gradients_random_graphs(seed):
    rng = np.random.default_rng(1000 + seed)
    m, inputs = random_graph(rng)
    n = inputs["X0"].shape[0]
    hw = m.shapes[m.pred_layer][0]
    assert fd_check(m, inputs, linear_objective(rng, n, hw)) < 1e-5
    assert fd_check(m, inputs, loss_objective(rng, n, hw)) < 1e-5


@pytest.mark.parametrize("size", [(4, 4), (16, 16)])
def test_gradients_sampled_on_real_architectures(size):
    h, w = size
    m = architecture(h, w).init_weights(5)
    rng = np.random.default_rng(7)
    spec = ContextSpec.for_block(h, w)
    inputs = m.make_inputs(rng.normal(size=(2, spec.n_a, spec.n_l + w)),
                           rng.normal(size=(2, h, spec.n_l)))
    obj = loss_objective(rng, 2, h * w)
    y, u, cache = forward(m, inputs)
    _, gy, gu = obj(y, u)
    grads = backward(m, cache, gy, gu)
    eps = 1e-6
    for i, (W, b) in m.params.items():
        for k, p in enumerate((W, b)):
            flat = p.reshape(-1)
            for j in rng.choice(p.size, size=min(4, p.size), replace=False):
                old = flat[j]
                flat[j] = old + eps
                m.touch()
                lp = obj(*forward(m, inputs)[:2])[0]
                flat[j] = old - eps
                m.touch()
                lm = obj(*forward(m, inputs)[:2])[0]
                flat[j] = old
                m.touch()
                num = (lp - lm) / (2 * eps)
                ana = grads[i][k].reshape(-1)[j]
                assert abs(ana - num) <= 1e-5 * max(abs(ana), abs(num)) + 1e-9


def test_heads_without_upstream_gradient_get_zero():
    m = architecture(4, 4).init_weights(0)
    x = np.random.default_rng(0).normal(size=(2, 48))
    y, u, cache = forward(m, x)
    grads = backward(m, cache, np.zeros_like(y), np.ones_like(u))
    assert not grads[3][0].any()
    assert grads[4][0].any()


def test_stale_cache_is_rejected():
    m = architecture(4, 4).init_weights(0)
    y, u, cache = forward(m, np.zeros((1, 48)))
    m.touch()
    with pytest.raises(StaleCacheError):
        backward(m, cache, y, u)
    other = m.copy()
    with pytest.raises(StaleCacheError):
        backward(other, forward(m, np.zeros((1, 48)))[2], y, u)


def test_shape_errors():
    with pytest.raises(ShapeError):
        Model([fc(["X0"], 4), fc([1], 14)], {"X0": (3, 4, 4)}, 1, 2)
    with pytest.raises(ShapeError):
        Model([fc(["X0"], 4), fc([1], 13)], {"X0": (8,)}, 1, 2)
    with pytest.raises(ShapeError):
        Model([fc([2], 4), fc([1], 14)], {"X0": (8,)}, 1, 2)
    with pytest.raises(ShapeError):
        Model([LayerSpec("pool", ("X0",)), fc([1], 14)], {"X0": (8,)}, 1, 2)
    m = architecture(4, 4)
    with pytest.raises(ShapeError):
        forward(m, np.zeros((1, 49)))


def test_non_finite_input_rejected():
    m = architecture(4, 4)
    x = np.zeros((1, 48))
    x[0, 3] = np.nan
    with pytest.raises(ValueError):
        forward(m, x)


def test_init_is_deterministic_and_glorot_bounded():
    a = architecture(4, 8).init_weights(11)
    b = architecture(4, 8).init_weights(11)
    for i in a.params:
        assert np.array_equal(a.params[i][0], b.params[i][0])
        W = a.params[i][0]
        limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        assert np.abs(W).max() <= limit
        assert not a.params[i][1].any()


@pytest.mark.parametrize("size", [(4, 4), (16, 16)])
def test_serialization_roundtrip(size, tmp_path):
    m = architecture(*size).init_weights(2).round_to_storage()
    p = tmp_path / "f.nnw"
    m.save(p)
    again = Model.load(p)
    assert again.block_size == m.block_size
    assert again.input_shapes == m.input_shapes
    for i in m.params:
        assert np.array_equal(again.params[i][0], m.params[i][0])
        assert np.array_equal(again.params[i][1], m.params[i][1])
    assert models_hash([again]) == models_hash([m])


def test_models_hash_order_independent_and_empty():
    a = architecture(4, 4).init_weights(0)
    b = architecture(4, 8).init_weights(0)
    assert models_hash([a, b]) == models_hash([b, a])
    assert models_hash([]) == 0
    c = a.copy()
    c.params[1][1][0] = 1.0
    assert models_hash([c, b]) != models_hash([a, b])


def test_adam_matches_textbook_update():
    rng = np.random.default_rng(0)
    m = Model([fc(["X0"], 3), fc([1], 14)], {"X0": (5,)}, 1, 2).init_weights(0)
    ref = {i: [W.copy(), b.copy()] for i, (W, b) in m.params.items()}
    mom = {i: [np.zeros_like(W), np.zeros_like(b)] for i, (W, b) in ref.items()}
    vel = {i: [np.zeros_like(W), np.zeros_like(b)] for i, (W, b) in ref.items()}
    opt = Adam(lr=1e-3)
    for t in range(1, 6):
        grads = {i: (rng.normal(size=W.shape), rng.normal(size=b.shape)) for i, (W, b) in ref.items()}
        opt.step(m, grads)
        for i in ref:
            for k in range(2):
                g = grads[i][k]
                mom[i][k] = 0.9 * mom[i][k] + 0.1 * g
                vel[i][k] = 0.999 * vel[i][k] + 0.001 * g * g
                mh = mom[i][k] / (1 - 0.9**t)
                vh = vel[i][k] / (1 - 0.999**t)
                ref[i][k] = ref[i][k] - 1e-3 * mh / (np.sqrt(vh) + 1e-8)
    for i in ref:
        for k in range(2):
            assert np.allclose(m.params[i][k], ref[i][k], rtol=0, atol=1e-9)


def test_adam_rejects_bad_eps():
    with pytest.raises(ValueError):
        Adam(eps=0.0)


def test_adam_step_invalidates_caches():
    m = architecture(4, 4).init_weights(0)
    y, u, cache = forward(m, np.zeros((1, 48)))
    Adam().step(m, backward(m, cache, y, u))
    with pytest.raises(StaleCacheError):
        backward(m, cache, y, u)
