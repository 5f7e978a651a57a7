"""A small deterministic neural-network engine.

Layers form a graph numbered from 1, each reading the outputs of earlier
layers or of the named inputs ("X0", "X1"). Supported kinds are
fully-connected, strided 2-D convolution with SAME padding, flattening and
concatenation, each optionally followed by a LeakyReLU. A model exposes two
heads: the prediction layer and the 14-unit logit layer.

Activations are batched: fully-connected tensors are (N, features), feature
maps are (N, channels, height, width).
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .context import ContextSpec, NETWORK_SIZES
from .signaling import NUM_LOGITS

LEAKY_SLOPE = 0.01
WEIGHT_MAGIC = b"NNW1"

KINDS = ("fc", "conv", "flatten", "concat")
ACTIVATIONS = ("none", "leaky_relu")
INPUT_NAMES = ("X0", "X1")


class ShapeError(ValueError):
    def __init__(self, layer, message: str):
        super().__init__(f"layer {layer}: {message}")
        self.layer = layer


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    inputs: tuple
    units: int = 0
    filter_h: int = 0
    filter_w: int = 0
    out_channels: int = 0
    stride_h: int = 1
    stride_w: int = 1
    activation: str = "none"


def fc(inputs, units, activation="none") -> LayerSpec:
    return LayerSpec("fc", tuple(inputs), units=units, activation=activation)


def conv(inputs, filters, stride, size=(3, 3), activation="leaky_relu") -> LayerSpec:
    return LayerSpec("conv", tuple(inputs), filter_h=size[0], filter_w=size[1],
                     out_channels=filters, stride_h=stride[0], stride_w=stride[1],
                     activation=activation)


def flatten(inp) -> LayerSpec:
    return LayerSpec("flatten", (inp,))


def concat(inputs) -> LayerSpec:
    return LayerSpec("concat", tuple(inputs))


def leaky_relu(z):
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def leaky_relu_grad(z):
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def _same_pad(size: int, k: int, s: int) -> tuple[int, int, int]:
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


class Model:
    """Layer graph plus parameters.

    params[i] is (W, b) for fully-connected/conv layer i (1-based) and None
    otherwise. FC weights are (out, in); conv weights are
    (out_channels, in_channels, filter_h, filter_w).
    """

    def __init__(self, layers, input_shapes: dict, pred_layer: int, logit_layer: int,
                 block_size=(0, 0)):
        self.layers = list(layers)
        self.input_shapes = {k: tuple(v) for k, v in input_shapes.items()}
        self.pred_layer = pred_layer
        self.logit_layer = logit_layer
        self.block_size = tuple(block_size)
        self.version = 0
        self.shapes = self._infer_shapes()
        self.params: dict = {}
        for i, spec in enumerate(self.layers, start=1):
            if spec.kind in ("fc", "conv"):
                self.params[i] = (np.zeros(self._weight_shape(i)), np.zeros(self._bias_shape(i)))

    def _input_shape(self, ref, shapes):
        if isinstance(ref, str):
            if ref not in self.input_shapes:
                raise KeyError(f"unknown model input {ref!r}")
            return self.input_shapes[ref]
        return shapes[ref]

    def _infer_shapes(self) -> dict:
        shapes = {}
        for i, spec in enumerate(self.layers, start=1):
            if spec.kind not in KINDS:
                raise ShapeError(i, f"unknown kind {spec.kind!r}")
            if spec.activation not in ACTIVATIONS:
                raise ShapeError(i, f"unknown activation {spec.activation!r}")
            for ref in spec.inputs:
                if not isinstance(ref, str) and not 1 <= ref < i:
                    raise ShapeError(i, f"input {ref} is not an earlier layer")
            ins = [self._input_shape(r, shapes) for r in spec.inputs]
            if spec.kind == "fc":
                if len(ins) != 1 or len(ins[0]) != 1:
                    raise ShapeError(i, "fully-connected layer needs one flat input")
                shapes[i] = (spec.units,)
            elif spec.kind == "conv":
                if len(ins) != 1 or len(ins[0]) != 3:
                    raise ShapeError(i, "convolution needs one (C, H, W) input")
                _, hh, ww = ins[0]
                ho = _same_pad(hh, spec.filter_h, spec.stride_h)[0]
                wo = _same_pad(ww, spec.filter_w, spec.stride_w)[0]
                shapes[i] = (spec.out_channels, ho, wo)
            elif spec.kind == "flatten":
                shapes[i] = (int(np.prod(ins[0])),)
            else:
                if any(len(s) != 1 for s in ins):
                    raise ShapeError(i, "concatenation needs flat inputs")
                shapes[i] = (sum(s[0] for s in ins),)
        for head, size in ((self.pred_layer, None), (self.logit_layer, NUM_LOGITS)):
            if head not in shapes:
                raise ShapeError(head, "head layer does not exist")
            if size is not None and shapes[head] != (size,):
                raise ShapeError(head, f"logit head must have {size} units")
        return shapes

    def in_shape(self, i: int) -> tuple:
        return self._input_shape(self.layers[i - 1].inputs[0], self.shapes)

    def _weight_shape(self, i):
        spec = self.layers[i - 1]
        if spec.kind == "fc":
            return (spec.units, self.in_shape(i)[0])
        return (spec.out_channels, self.in_shape(i)[0], spec.filter_h, spec.filter_w)

    def _bias_shape(self, i):
        spec = self.layers[i - 1]
        return (spec.units,) if spec.kind == "fc" else (spec.out_channels,)

    def num_parameters(self) -> int:
        return sum(W.size + b.size for W, b in self.params.values())

    def init_weights(self, seed: int = 0):
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        for i in sorted(self.params):
            W, b = self.params[i]
            if W.ndim == 2:
                fan_in, fan_out = W.shape[1], W.shape[0]
            else:
                rf = W.shape[2] * W.shape[3]
                fan_in, fan_out = W.shape[1] * rf, W.shape[0] * rf
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.params[i] = (rng.uniform(-limit, limit, W.shape), np.zeros_like(b))
        self.version += 1
        return self

    def copy(self) -> "Model":
        m = Model(self.layers, self.input_shapes, self.pred_layer, self.logit_layer, self.block_size)
        m.params = {i: (W.copy(), b.copy()) for i, (W, b) in self.params.items()}
        return m

    def touch(self):
        """Mark parameters as modified; outstanding caches become stale."""
        self.version += 1

    def round_to_storage(self):
        """Round every parameter to the nearest 32-bit float."""
        self.params = {i: (W.astype(np.float32).astype(np.float64),
                           b.astype(np.float32).astype(np.float64))
                       for i, (W, b) in self.params.items()}
        self.touch()
        return self

    # -- serialization ----------------------------------------------------

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        h, w = self.block_size
        buf.write(WEIGHT_MAGIC)
        buf.write(struct.pack("<HHH", h, w, len(self.layers)))
        buf.write(struct.pack("<HH", self.pred_layer, self.logit_layer))
        buf.write(struct.pack("<B", len(self.input_shapes)))
        for name in INPUT_NAMES:
            if name in self.input_shapes:
                shape = self.input_shapes[name]
                buf.write(struct.pack("<BB", INPUT_NAMES.index(name), len(shape)))
                buf.write(struct.pack(f"<{len(shape)}I", *shape))
        for i, spec in enumerate(self.layers, start=1):
            buf.write(struct.pack("<BBB", KINDS.index(spec.kind),
                                  ACTIVATIONS.index(spec.activation), len(spec.inputs)))
            refs = [-(INPUT_NAMES.index(r) + 1) if isinstance(r, str) else r for r in spec.inputs]
            buf.write(struct.pack(f"<{len(refs)}h", *refs))
            if spec.kind == "fc":
                buf.write(struct.pack("<II", self.in_shape(i)[0], spec.units))
            elif spec.kind == "conv":
                buf.write(struct.pack("<6I", spec.filter_h, spec.filter_w, self.in_shape(i)[0],
                                      spec.out_channels, spec.stride_h, spec.stride_w))
            if i in self.params:
                W, b = self.params[i]
                buf.write(np.ascontiguousarray(W, dtype="<f4").tobytes())
                buf.write(np.ascontiguousarray(b, dtype="<f4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Model":
        if data[:4] != WEIGHT_MAGIC:
            raise ValueError("not a weight file")
        off = 4
        h, w, n_layers = struct.unpack_from("<HHH", data, off)
        off += 6
        pred_layer, logit_layer = struct.unpack_from("<HH", data, off)
        off += 4
        (n_inputs,) = struct.unpack_from("<B", data, off)
        off += 1
        input_shapes = {}
        for _ in range(n_inputs):
            idx, ndim = struct.unpack_from("<BB", data, off)
            off += 2
            input_shapes[INPUT_NAMES[idx]] = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
        layers, raw = [], []
        for _ in range(n_layers):
            kind_i, act_i, n_refs = struct.unpack_from("<BBB", data, off)
            off += 3
            refs = struct.unpack_from(f"<{n_refs}h", data, off)
            off += 2 * n_refs
            refs = tuple(INPUT_NAMES[-r - 1] if r < 0 else r for r in refs)
            kind, act = KINDS[kind_i], ACTIVATIONS[act_i]
            if kind == "fc":
                n_in, units = struct.unpack_from("<II", data, off)
                off += 8
                layers.append(LayerSpec(kind, refs, units=units, activation=act))
                wshape, bshape = (units, n_in), (units,)
            elif kind == "conv":
                fh, fw, cin, cout, sh, sw = struct.unpack_from("<6I", data, off)
                off += 24
                layers.append(LayerSpec(kind, refs, filter_h=fh, filter_w=fw, out_channels=cout,
                                        stride_h=sh, stride_w=sw, activation=act))
                wshape, bshape = (cout, cin, fh, fw), (cout,)
            else:
                layers.append(LayerSpec(kind, refs, activation=act))
                raw.append(None)
                continue
            nw, nb = int(np.prod(wshape)), int(np.prod(bshape))
            W = np.frombuffer(data, dtype="<f4", count=nw, offset=off).reshape(wshape)
            off += 4 * nw
            b = np.frombuffer(data, dtype="<f4", count=nb, offset=off)
            off += 4 * nb
            raw.append((W.astype(np.float64), b.astype(np.float64)))
        model = cls(layers, input_shapes, pred_layer, logit_layer, (h, w))
        for i, p in enumerate(raw, start=1):
            if p is not None:
                if p[0].shape != model.params[i][0].shape:
                    raise ShapeError(i, "stored weights do not match the layer graph")
                model.params[i] = p
        return model

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def make_inputs(self, above: np.ndarray, left: np.ndarray) -> dict:
        """Network inputs from batched (N, n_a, n_l + w) and (N, h, n_l) contexts."""
        if "X1" in self.input_shapes:
            return {"X0": above[:, None], "X1": left[:, None]}
        n = above.shape[0]
        return {"X0": np.concatenate([above.reshape(n, -1), left.reshape(n, -1)], axis=1)}


# ---------------------------------------------------------------------------
# Architectures for the trained block sizes


def architecture(h: int, w: int) -> Model:
    """Untrained f_{h,w}; fully-connected when min(h, w) <= 8, else two
    convolutional branches merged by fully-connected layers."""
    if (h, w) not in NETWORK_SIZES:
        raise ValueError(f"no network for block size {h}x{w}")
    spec = ContextSpec.for_block(h, w)
    if min(h, w) <= 8:
        n_in = spec.n_a * (spec.n_l + w) + h * spec.n_l
        layers = [
            fc(["X0"], 1200, "leaky_relu"),
            fc([1], 1200, "leaky_relu"),
            fc([2], h * w),
            fc([2], NUM_LOGITS),
        ]
        return Model(layers, {"X0": (n_in,)}, 3, 4, (h, w))
    bold = (2, 2) if (h, w) == (32, 32) else None
    layers = [
        conv(["X0"], 32, (2, 2)),
        conv([1], 64, (2, 2)),
        conv([2], 128, bold or (1, 2)),
        conv([3], 128, (1, 2)),
        flatten(4),
        conv(["X1"], 32, (2, 2)),
        conv([6], 64, (2, 2)),
        conv([7], 128, bold or (2, 1)),
        conv([8], 128, (2, 1)),
        flatten(9),
        concat([5, 10]),
        fc([11], h * w if (h, w) == (32, 32) else 500, "leaky_relu"),
        fc([12], h * w),
        fc([12], NUM_LOGITS),
    ]
    shapes = {"X0": (1, spec.n_a, spec.n_l + w), "X1": (1, h, spec.n_l)}
    return Model(layers, shapes, 13, 14, (h, w))


# ---------------------------------------------------------------------------
# Forward / backward


@dataclass
class ActivationCache:
    version: int
    model_id: int
    inputs: dict
    outputs: dict = field(default_factory=dict)
    pre: dict = field(default_factory=dict)
    cols: dict = field(default_factory=dict)


def _conv_forward(x, W, b, spec):
    n, c, hh, ww = x.shape
    ho, pt, pb = _same_pad(hh, spec.filter_h, spec.stride_h)
    wo, pl, pr = _same_pad(ww, spec.filter_w, spec.stride_w)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (spec.filter_h, spec.filter_w), axis=(2, 3))
    win = win[:, :, ::spec.stride_h, ::spec.stride_w][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
    out = cols @ W.reshape(W.shape[0], -1).T + b
    return out.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2), cols


def _conv_backward(g, x_shape, cols, W, spec):
    n, c, hh, ww = x_shape
    cout, _, fh, fw = W.shape
    ho, pt, pb = _same_pad(hh, fh, spec.stride_h)
    wo, pl, pr = _same_pad(ww, fw, spec.stride_w)
    g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
    dW = (g2.T @ cols).reshape(W.shape)
    db = g2.sum(axis=0)
    dcols = (g2 @ W.reshape(cout, -1)).reshape(n, ho, wo, c, fh, fw)
    dxp = np.zeros((n, c, hh + pt + pb, ww + pl + pr))
    sh, sw = spec.stride_h, spec.stride_w
    for i in range(fh):
        for j in range(fw):
            dxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dW, db, dxp[:, :, pt:pt + hh, pl:pl + ww]


def _as_input_dict(model: Model, inputs) -> dict:
    if isinstance(inputs, dict):
        d = inputs
    elif isinstance(inputs, (tuple, list)):
        d = dict(zip(INPUT_NAMES, inputs))
    else:
        d = {"X0": inputs}
    out = {}
    for name, shape in model.input_shapes.items():
        if name not in d:
            raise ShapeError(0, f"missing input {name}")
        a = np.asarray(d[name], dtype=np.float64)
        if a.shape[1:] != shape:
            raise ShapeError(0, f"input {name} has shape {a.shape[1:]}, expected {shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"input {name} holds non-finite values")
        out[name] = a
    return out


def forward(model: Model, inputs):
    """Returns (prediction (N, hw), logits (N, 14), cache)."""
    x = _as_input_dict(model, inputs)
    cache = ActivationCache(model.version, id(model), x)
    outs = cache.outputs
    for i, spec in enumerate(model.layers, start=1):
        ins = [x[r] if isinstance(r, str) else outs[r] for r in spec.inputs]
        if spec.kind == "fc":
            W, b = model.params[i]
            z = ins[0] @ W.T + b
        elif spec.kind == "conv":
            W, b = model.params[i]
            z, cache.cols[i] = _conv_forward(ins[0], W, b, spec)
        elif spec.kind == "flatten":
            z = ins[0].reshape(ins[0].shape[0], -1)
        else:
            z = np.concatenate(ins, axis=1)
        if spec.activation == "leaky_relu":
            cache.pre[i] = z
            z = leaky_relu(z)
        outs[i] = z
    return outs[model.pred_layer], outs[model.logit_layer], cache


def backward(model: Model, cache: ActivationCache, grad_pred, grad_logits) -> dict:
    """Parameter gradients {layer: (dW, db)} for upstream head gradients."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise StaleCacheError("activation cache does not match the current model parameters")
    gout = {model.pred_layer: np.asarray(grad_pred, dtype=np.float64)}
    gl = np.asarray(grad_logits, dtype=np.float64)
    gout[model.logit_layer] = gout[model.logit_layer] + gl if model.logit_layer in gout else gl
    grads = {}
    for i in range(len(model.layers), 0, -1):
        spec = model.layers[i - 1]
        g = gout.pop(i, None)
        if g is None:
            if i in model.params:
                W, b = model.params[i]
                grads[i] = (np.zeros_like(W), np.zeros_like(b))
            continue
        if spec.activation == "leaky_relu":
            g = g * leaky_relu_grad(cache.pre[i])
        ins = [cache.inputs[r] if isinstance(r, str) else cache.outputs[r] for r in spec.inputs]
        if spec.kind == "fc":
            W, _ = model.params[i]
            grads[i] = (g.T @ ins[0], g.sum(axis=0))
            gins = [g @ W]
        elif spec.kind == "conv":
            W, _ = model.params[i]
            dW, db, dx = _conv_backward(g, ins[0].shape, cache.cols[i], W, spec)
            grads[i] = (dW, db)
            gins = [dx]
        elif spec.kind == "flatten":
            gins = [g.reshape(ins[0].shape)]
        else:
            splits = np.cumsum([a.shape[1] for a in ins])[:-1]
            gins = np.split(g, splits, axis=1)
        for ref, gi in zip(spec.inputs, gins):
            if isinstance(ref, str):
                continue
            gout[ref] = gout[ref] + gi if ref in gout else gi
    return grads


# ---------------------------------------------------------------------------
# Optimizer


@numba.njit(cache=True)
def _adam_update(p, g, m, v, beta1, beta2, lr_t, eps_t):
    for j in range(p.shape[0]):
        gj = g[j]
        m[j] = beta1 * m[j] + (1.0 - beta1) * gj
        v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj
        p[j] -= lr_t * m[j] / (np.sqrt(v[j]) + eps_t)


class Adam:
    def __init__(self, lr: float = 2e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, model: Model, grads: dict):
        """In-place update of model.params from grads (same keys).

        Bias correction is folded into the step size and epsilon.
        """
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        lr_t = self.lr * np.sqrt(c2) / c1
        eps_t = self.eps * np.sqrt(c2)
        for i in sorted(grads):
            W, b = model.params[i]
            for k, (p, g) in enumerate(zip((W, b), grads[i])):
                key = (i, k)
                m = self.m.get(key)
                if m is None:
                    m = self.m[key] = np.zeros_like(p)
                    self.v[key] = np.zeros_like(p)
                _adam_update(p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                             m.reshape(-1), self.v[key].reshape(-1),
                             self.beta1, self.beta2, lr_t, eps_t)
        model.touch()


def models_hash(models) -> int:
    """64-bit digest of a collection of models (order independent)."""
    if not models:
        return 0
    digest = hashlib.sha256()
    for m in sorted(models, key=lambda m: m.block_size):
        digest.update(m.to_bytes())
    return int.from_bytes(digest.digest()[:8], "little")
