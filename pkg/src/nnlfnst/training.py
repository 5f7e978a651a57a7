"""Training data collection with RD-oracle pair labels, the joint objective and
the training loop for the per-size networks; also bank training from a corpus."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .classic import NUM_MODES, predict_classic, wide_angle_remap
from .codec import RDConfig, encode_image, nn_candidate_costs
from .context import ContextSpec, denormalize, extract_context, preprocess
from .entropy import dequantize, quantize
from .nn import Adam, Model, backward, forward, softmax
from .signaling import NUM_PAIRS, mode_to_pair
from .transforms import (FAMILIES, NUM_SETS, TransformBank, dct2_forward, dct2_inverse,
                         gather_region, kernel_family, train_bank)

TRAINING_QPS = (22, 27, 32, 37)


# ---------------------------------------------------------------------------
# Reconstructions the contexts are drawn from


def proxy_reconstruction(image: np.ndarray, qp: int, bitdepth: int = 8, block: int = 8) -> np.ndarray:
    """Blockwise DCT quantization at qp: a cheap stand-in for a decoded picture."""
    img = np.asarray(image, dtype=np.int64)
    h, w = img.shape
    ph, pw = -(-h // block) * block, -(-w // block) * block
    a = np.pad(img, ((0, ph - h), (0, pw - w)), mode="edge").astype(np.float64)
    tiles = a.reshape(ph // block, block, pw // block, block).transpose(0, 2, 1, 3)
    rec = dct2_inverse(dequantize(quantize(dct2_forward(tiles), qp), qp))
    rec = rec.transpose(0, 2, 1, 3).reshape(ph, pw)[:h, :w]
    return np.clip(np.rint(rec), 0, (1 << bitdepth) - 1).astype(np.int64)


def codec_reconstruction(image: np.ndarray, qp: int, bank: TransformBank, bitdepth: int = 8) -> np.ndarray:
    """Reconstruction by the classic-mode codec itself (slow)."""
    cfg = RDConfig(qp=qp, nn_enabled=False, bitdepth=bitdepth)
    return encode_image(image, cfg, None, bank).recon


# ---------------------------------------------------------------------------
# Datasets


@dataclass
class Dataset:
    """Triples for one block size plus what is needed to re-derive labels."""
    size: tuple
    above: np.ndarray       # (N, n_a, n_l + w) preprocessed
    left: np.ndarray        # (N, h, n_l) preprocessed
    mu: np.ndarray          # (N,)
    orig: np.ndarray        # (N, h, w) int64 original samples
    i1: np.ndarray
    i2: np.ndarray
    qp: np.ndarray          # (N,) QP of the source picture
    source: np.ndarray      # (N,) index into sources
    sources: list = field(default_factory=list)
    bitdepth: int = 8

    def __len__(self) -> int:
        return len(self.i1)

    @property
    def targets(self) -> np.ndarray:
        """Normalized prediction targets Y_c, shape (N, h*w)."""
        scale = float(1 << (self.bitdepth - 1))
        n = len(self)
        return (self.orig.reshape(n, -1) - self.mu[:, None]) / scale

    def subset(self, idx) -> "Dataset":
        return Dataset(self.size, self.above[idx], self.left[idx], self.mu[idx], self.orig[idx],
                       self.i1[idx], self.i2[idx], self.qp[idx], self.source[idx],
                       list(self.sources), self.bitdepth)

    def _arrays(self) -> dict:
        return dict(size=np.array(self.size), above=self.above, left=self.left, mu=self.mu,
                    orig=self.orig, i1=self.i1, i2=self.i2, qp=self.qp, source=self.source,
                    sources=np.array(self.sources, dtype=str), bitdepth=np.array(self.bitdepth))

    def save(self, path):
        np.savez(path, **self._arrays())

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path) as z:
            return cls(tuple(int(v) for v in z["size"]), z["above"], z["left"], z["mu"], z["orig"],
                       z["i1"], z["i2"], z["qp"], z["source"], [str(s) for s in z["sources"]],
                       int(z["bitdepth"]))

    def digest(self) -> str:
        h = hashlib.sha256()
        for k, v in self._arrays().items():
            h.update(k.encode())
            buf = io.BytesIO()
            np.save(buf, v, allow_pickle=False)
            h.update(buf.getvalue())
        return h.hexdigest()


def block_positions(shape, h: int, w: int, stride=None, limit: int | None = None,
                    rng: np.random.Generator | None = None) -> list:
    sy, sx = stride or (max(h // 2, 1), max(w // 2, 1))
    H, W = shape
    pos = [(y, x) for y in range(0, H - h + 1, sy) for x in range(0, W - w + 1, sx)]
    if limit is not None and len(pos) > limit:
        rng = rng or np.random.default_rng(0)
        keep = np.sort(rng.choice(len(pos), size=limit, replace=False))
        pos = [pos[i] for i in keep]
    return pos


def model_predictions(model: Model, above, left, mu, bitdepth: int = 8,
                      batch: int = 2048) -> tuple[np.ndarray, np.ndarray | None]:
    """Integer predictions (N, h, w) and logits (N, 14) of a batch of contexts."""
    n = len(mu)
    h, w = model.block_size
    preds = np.empty((n, h, w), dtype=np.int64)
    logits = np.empty((n, 14))
    for s in range(0, n, batch):
        y_c, u, _ = forward(model, model.make_inputs(above[s:s + batch], left[s:s + batch]))
        y = denormalize(y_c.reshape(-1, h, w), mu[s:s + batch, None, None], bitdepth)
        preds[s:s + batch] = np.rint(y).astype(np.int64)
        logits[s:s + batch] = u
    return preds, logits


def mean_predictions(mu: np.ndarray, h: int, w: int, bitdepth: int = 8) -> np.ndarray:
    p = np.clip(np.rint(mu), 0, (1 << bitdepth) - 1).astype(np.int64)
    return np.broadcast_to(p[:, None, None], (len(mu), h, w)).copy()


def oracle_labels(orig, preds, qps, bank: TransformBank, bitdepth: int = 8):
    """RD-optimal pair index per block for lfnstIdx 1 and 2; ties go to the lowest index."""
    n = len(orig)
    i1 = np.zeros(n, dtype=np.int64)
    i2 = np.zeros(n, dtype=np.int64)
    qps = np.asarray(qps)
    for qp in np.unique(qps):
        sel = np.flatnonzero(qps == qp)
        costs = nn_candidate_costs(orig[sel], preds[sel], int(qp), bank, bitdepth)
        i1[sel] = np.argmin(costs.pairs[:, 0], axis=1)
        i2[sel] = np.argmin(costs.pairs[:, 1], axis=1)
    return i1, i2


def collect_dataset(images, size: tuple, bank: TransformBank, seed: int = 0,
                    qps=TRAINING_QPS, model: Model | None = None, stride=None,
                    per_image: int | None = None, recon_mode: str = "proxy",
                    bitdepth: int = 8, names=None) -> Dataset:
    """Triples for one block size from a list of images.

    Each image gets one QP drawn from qps. Contexts come from its
    reconstruction at that QP; labels come from the exhaustive RD search over
    the 7 pairs on the residual of `model` (or of the context-mean prediction).
    """
    h, w = size
    spec = ContextSpec.for_block(h, w)
    rng = np.random.default_rng(seed)
    above, left, mu, orig, qp_arr, src = [], [], [], [], [], []
    names = list(names) if names is not None else [f"image{i}" for i in range(len(images))]
    sources = []
    for k, img in enumerate(images):
        img = np.asarray(img, dtype=np.int64)
        qp = int(rng.choice(qps))
        if recon_mode == "proxy":
            rec = proxy_reconstruction(img, qp, bitdepth)
        elif recon_mode == "codec":
            rec = codec_reconstruction(img, qp, bank, bitdepth)
        else:
            raise ValueError(f"unknown recon_mode {recon_mode!r}")
        sources.append(f"{names[k]}@qp{qp}")
        for (y, x) in block_positions(img.shape, h, w, stride, per_image, rng):
            pre = preprocess(extract_context(rec, (y, x), spec, bitdepth), bitdepth)
            above.append(pre.above)
            left.append(pre.left)
            mu.append(pre.mu)
            orig.append(img[y:y + h, x:x + w])
            qp_arr.append(qp)
            src.append(k)
    n = len(mu)
    ds = Dataset((h, w),
                 np.array(above).reshape(n, spec.n_a, spec.n_l + w),
                 np.array(left).reshape(n, h, spec.n_l),
                 np.array(mu, dtype=np.float64),
                 np.array(orig, dtype=np.int64).reshape(n, h, w),
                 np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64),
                 np.array(qp_arr, dtype=np.int64), np.array(src, dtype=np.int64), sources, bitdepth)
    if n:
        relabel(ds, bank, model)
    return ds


def relabel(ds: Dataset, bank: TransformBank, model: Model | None = None) -> Dataset:
    """Recompute i1/i2 in place from the residual of `model` (or the mean)."""
    h, w = ds.size
    if model is None:
        preds = mean_predictions(ds.mu, h, w, ds.bitdepth)
    else:
        preds, _ = model_predictions(model, ds.above, ds.left, ds.mu, ds.bitdepth)
    ds.i1, ds.i2 = oracle_labels(ds.orig, preds, ds.qp, bank, ds.bitdepth)
    return ds


# ---------------------------------------------------------------------------
# Objective


def classification_loss(logits, i1, i2) -> tuple[float, np.ndarray]:
    """Mean over the batch of the summed natural-log cross-entropies of both
    heads, and its gradient w.r.t. the logits."""
    u = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    i1 = np.atleast_1d(i1)
    i2 = np.atleast_1d(i2)
    n = len(u)
    rows = np.arange(n)
    grad = np.empty_like(u)
    loss = 0.0
    for sl, lab in ((slice(0, NUM_PAIRS), i1), (slice(NUM_PAIRS, 2 * NUM_PAIRS), i2)):
        z = u[:, sl]
        zmax = z.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
        loss += float(np.sum(lse - z[rows, lab]))
        g = softmax(z)
        g[rows, lab] -= 1.0
        grad[:, sl] = g
    return loss / n, grad / n


def prediction_loss(y_hat, y) -> tuple[float, np.ndarray]:
    """Mean absolute error over the normalized block, and its subgradient."""
    d = np.asarray(y_hat, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    d2 = np.atleast_2d(d)
    n, hw = d2.shape
    return float(np.abs(d2).sum() / (n * hw)), (np.sign(d) / (n * hw))


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class TrainResult:
    model: Model
    loss: np.ndarray            # total loss per iteration
    pred_loss: np.ndarray
    cls_loss: np.ndarray
    held_out: list = field(default_factory=list)   # (iteration, acc1, acc2)
    warmup: "TrainResult | None" = None

    def window_means(self, window: int = 500) -> np.ndarray:
        n = len(self.loss) // window
        return self.loss[: n * window].reshape(n, window).mean(axis=1)


def accuracy(model: Model, ds: Dataset, batch: int = 2048) -> tuple[float, float]:
    """Top-1 accuracy of both heads against the oracle labels."""
    _, logits = model_predictions(model, ds.above, ds.left, ds.mu, ds.bitdepth, batch)
    a1 = float(np.mean(np.argmax(logits[:, :NUM_PAIRS], axis=1) == ds.i1))
    a2 = float(np.mean(np.argmax(logits[:, NUM_PAIRS:], axis=1) == ds.i2))
    return a1, a2


def train(model: Model, dataset: Dataset, iterations: int, batch_size: int = 100,
          lr: float = 2e-4, seed: int = 0, held_out: Dataset | None = None,
          eval_every: int = 1000, optimizer: Adam | None = None, log=None) -> TrainResult:
    """Joint training of the prediction and both classification heads.

    Mini-batches walk seeded per-epoch permutations of the dataset. The model
    is updated in place and returned in the result.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if tuple(model.block_size) != tuple(dataset.size):
        raise ValueError(f"model {model.block_size} does not match dataset {dataset.size}")
    rng = np.random.default_rng(seed)
    opt = optimizer or Adam(lr=lr)
    targets = dataset.targets
    losses = np.empty(iterations)
    p_losses = np.empty(iterations)
    c_losses = np.empty(iterations)
    history = []
    order = rng.permutation(n)
    cursor = 0
    for it in range(iterations):
        if cursor + batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = np.sort(order[cursor:cursor + batch_size])
        cursor += batch_size
        inputs = model.make_inputs(dataset.above[idx], dataset.left[idx])
        y_c, logits, cache = forward(model, inputs)
        lp, gp = prediction_loss(y_c, targets[idx])
        lc, gc = classification_loss(logits, dataset.i1[idx], dataset.i2[idx])
        opt.step(model, backward(model, cache, gp, gc))
        losses[it] = lp + lc
        p_losses[it] = lp
        c_losses[it] = lc
        if held_out is not None and len(held_out) and (it + 1) % eval_every == 0:
            a1, a2 = accuracy(model, held_out)
            history.append((it + 1, a1, a2))
            if log:
                log(f"iter {it + 1}: loss {losses[max(0, it - eval_every + 1):it + 1].mean():.4f} "
                    f"held-out acc {a1:.3f}/{a2:.3f}")
        elif log and (it + 1) % eval_every == 0:
            log(f"iter {it + 1}: loss {losses[max(0, it - eval_every + 1):it + 1].mean():.4f}")
    return TrainResult(model, losses, p_losses, c_losses, history)


def train_two_rounds(model: Model, dataset: Dataset, bank: TransformBank, warmup: int,
                     iterations: int, seed: int = 0, held_out: Dataset | None = None,
                     **kw) -> TrainResult:
    """Warm up on mean-prediction labels, relabel every triple (and the
    held-out set) against the warmed-up network's residual, then train on."""
    first = train(model, dataset, warmup, seed=seed, **kw) if warmup else None
    relabel(dataset, bank, model)
    if held_out is not None:
        relabel(held_out, bank, model)
    result = train(model, dataset, iterations, seed=seed + 1, held_out=held_out, **kw)
    result.warmup = first
    return result


# ---------------------------------------------------------------------------
# Secondary-transform bank from a corpus


def bank_samples(images, qps=TRAINING_QPS, sizes=((4, 4), (8, 8)), stride=None,
                 per_image: int | None = None, seed: int = 0, bitdepth: int = 8) -> dict:
    """Low-frequency primary coefficients of classic-mode residuals, grouped
    by (family, set) through each block's best mode and its implicit pair.

    The best mode is the SSE-optimal one of all 67 on proxy reconstructions.
    """
    rng = np.random.default_rng(seed)
    groups = {(f, s): [] for f in FAMILIES for s in range(NUM_SETS)}
    for img in images:
        img = np.asarray(img, dtype=np.int64)
        qp = int(rng.choice(qps))
        rec = proxy_reconstruction(img, qp, bitdepth)
        for (h, w) in sizes:
            family = kernel_family(h, w)
            cspec = ContextSpec(1, 1, h, w)
            for (y, x) in block_positions(img.shape, h, w, stride or (h, w), per_image, rng):
                ctx = extract_context(rec, (y, x), cspec, bitdepth)
                blk = img[y:y + h, x:x + w]
                preds = np.stack([predict_classic(ctx, m, h, w) for m in range(NUM_MODES)])
                sse = np.sum((preds - blk) ** 2, axis=(1, 2))
                mode = int(np.argmin(sse))
                spec, _ = mode_to_pair(wide_angle_remap(mode, h, w))
                primary = dct2_forward(blk - preds[mode])
                groups[(family, spec.set_index)].append(gather_region(primary, family, spec.transpose))
    return {k: np.array(v).reshape(len(v), k[0]) for k, v in groups.items()}


def train_bank_from_images(images, seed: int = 0, min_per_dim: int = 10, **kw) -> TransformBank:
    return train_bank(bank_samples(images, seed=seed, **kw), min_per_dim=min_per_dim)
