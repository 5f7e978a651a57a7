"""Desk-scale training run: bank, datasets, both networks, held-out analysis.

Everything is seeded. Results are cached under a key derived from the
configuration and the source of every module the run depends on, so a
second call with unchanged code and settings only reloads the artifacts.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .codec import nn_candidate_costs
from .corpus import HELD_OUT_NAMES, NATURAL_NAMES, natural_images
from .evaluate import heldout_analysis
from .nn import Model, architecture
from .predictor import ModelSet
from .training import (Dataset, accuracy, collect_dataset, model_predictions, relabel,
                       train_bank_from_images, train_two_rounds)
from .transforms import TransformBank

_DEPENDENCIES = ("classic", "codec", "context", "corpus", "desk", "entropy", "evaluate", "nn",
                 "predictor", "signaling", "training", "transforms")


@dataclass(frozen=True)
class DeskConfig:
    sizes: tuple = ((4, 4), (8, 8))
    seed: int = 0
    bank_per_image: int = 1500
    per_image: int = 7000
    held_out_per_image: int = 5000
    warmup: int = 2000
    iterations: int = 20000
    batch_size: int = 100
    lr: float = 2e-4
    eval_every: int = 2000

    def key(self) -> str:
        h = hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode())
        here = Path(__file__).parent
        for name in _DEPENDENCIES:
            h.update((here / f"{name}.py").read_bytes())
        return h.hexdigest()[:16]


@dataclass
class SizeReport:
    size: tuple
    triples: int
    held_out_blocks: int
    accuracy: tuple               # per head, against labels of the final network
    accuracy_informative: tuple   # same, over blocks where some pair codes a nonzero level
    window_means: list
    analysis: dict                # scheme -> {mean_cost, lfnst_blocks, mean_pair_bits, remainder_hits}
    seconds: float


def _training_images():
    names = [n for n in NATURAL_NAMES if n not in HELD_OUT_NAMES]
    return names, natural_images(names)


def _informative_accuracy(model: Model, ds: Dataset, bank: TransformBank) -> tuple:
    preds, logits = model_predictions(model, ds.above, ds.left, ds.mu, ds.bitdepth)
    acc = []
    for m in (0, 1):
        hit, tot = 0, 0
        for qp in np.unique(ds.qp):
            sel = np.flatnonzero(ds.qp == qp)
            c = nn_candidate_costs(ds.orig[sel], preds[sel], int(qp), bank, ds.bitdepth)
            p = c.pairs[:, m]
            informative = np.isfinite(p).any(axis=1)
            lab = (ds.i1 if m == 0 else ds.i2)[sel]
            guess = np.argmax(logits[sel, 7 * m:7 * m + 7], axis=1)
            hit += int(np.sum((guess == lab) & informative))
            tot += int(informative.sum())
        acc.append(hit / tot if tot else float("nan"))
    return tuple(acc)


def run_desk(cfg: DeskConfig = DeskConfig(), cache_dir="desk_cache", log=print) -> tuple:
    """Returns (bank, ModelSet, {size: SizeReport}); reuses cached artifacts."""
    root = Path(cache_dir) / cfg.key()
    root.mkdir(parents=True, exist_ok=True)
    names = imgs = None

    bank_path = root / "bank.lfb"
    if bank_path.exists():
        bank = TransformBank.load(bank_path)
    else:
        names, imgs = _training_images()
        t = time.time()
        bank = train_bank_from_images(list(imgs.values()), seed=cfg.seed, per_image=cfg.bank_per_image)
        bank.save(bank_path)
        log(f"bank trained in {time.time() - t:.0f}s")

    reports = {}
    models = []
    for size in cfg.sizes:
        h, w = size
        tag = f"{h}x{w}"
        model_path = root / f"f_{tag}.nnw"
        report_path = root / f"report_{tag}.json"
        if model_path.exists() and report_path.exists():
            models.append(Model.load(model_path))
            d = json.loads(report_path.read_text())
            d["size"] = tuple(d["size"])
            d["accuracy"] = tuple(d["accuracy"])
            d["accuracy_informative"] = tuple(d["accuracy_informative"])
            reports[size] = SizeReport(**d)
            continue
        if imgs is None:
            names, imgs = _training_images()
        t = time.time()
        ds = collect_dataset(list(imgs.values()), size, bank, seed=cfg.seed, per_image=cfg.per_image,
                             names=names)
        held = natural_images(HELD_OUT_NAMES)
        ho = collect_dataset(list(held.values()), size, bank, seed=cfg.seed + 1, stride=(h, w),
                             per_image=cfg.held_out_per_image, names=list(HELD_OUT_NAMES))
        log(f"{tag}: {len(ds)} triples, {len(ho)} held-out blocks")
        model = architecture(h, w).init_weights(cfg.seed)
        res = train_two_rounds(model, ds, bank, cfg.warmup, cfg.iterations, seed=cfg.seed,
                               held_out=ho, batch_size=cfg.batch_size, lr=cfg.lr,
                               eval_every=cfg.eval_every, log=log)
        np.save(root / f"loss_{tag}.npy", res.loss)
        # the decoder sees stored weights; evaluate exactly those
        model = ModelSet([res.model])[size]
        relabel(ho, bank, model)
        preds, logits = model_predictions(model, ho.above, ho.left, ho.mu, ho.bitdepth)
        stats = heldout_analysis(ho.orig, preds, logits, ho.qp, bank, ho.bitdepth)
        rep = SizeReport(size, len(ds), len(ho), accuracy(model, ho),
                         _informative_accuracy(model, ho, bank),
                         [float(v) for v in res.window_means(500)],
                         {k: asdict(v) for k, v in stats.items()}, time.time() - t)
        model.save(model_path)
        report_path.write_text(json.dumps(asdict(rep), indent=1))
        (root / f"dataset_{tag}.sha256").write_text(ds.digest() + "\n")
        models.append(model)
        reports[size] = rep
        log(f"{tag}: done in {rep.seconds:.0f}s")
    return bank, ModelSet(models), reports
