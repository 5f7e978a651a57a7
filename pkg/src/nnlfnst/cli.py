"""Command-line entry points."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import corpus
from .codec import RDConfig, decode_image, encode_image
from .evaluate import EXPERIMENT_QPS, run_experiment
from .nn import architecture
from .predictor import ModelSet
from .signaling import SignalingScheme
from .training import Dataset, collect_dataset, train, train_bank_from_images, relabel
from .transforms import TransformBank

SCHEMES = [s.value for s in SignalingScheme]


def _size(text: str) -> tuple[int, int]:
    h, _, w = text.lower().partition("x")
    return int(h), int(w or h)


def _images(args) -> dict:
    if getattr(args, "images", None):
        return corpus.load_directory(args.images)
    names = [n for n in corpus.NATURAL_NAMES if n not in corpus.HELD_OUT_NAMES]
    if getattr(args, "held_out", False):
        names = list(corpus.HELD_OUT_NAMES)
    return corpus.natural_images(names)


def _models(args) -> ModelSet | None:
    if not args.models:
        return None
    return ModelSet.load(args.models)


def _bank(args) -> TransformBank:
    if not args.bank:
        sys.exit("error: --bank FILE is required")
    return TransformBank.load(args.bank)


def cmd_train_bank(args):
    imgs = _images(args)
    bank = train_bank_from_images(list(imgs.values()), seed=args.seed, per_image=args.per_image)
    out = args.out or "bank.lfb"
    bank.save(out)
    print(f"wrote {out}")


def cmd_collect_dataset(args):
    imgs = _images(args)
    bank = _bank(args)
    size = _size(args.size)
    model = None
    models = _models(args)
    if models is not None and size in models:
        model = models[size]
    qps = (args.qp,) if args.qp is not None else EXPERIMENT_QPS
    ds = collect_dataset(list(imgs.values()), size, bank, seed=args.seed, qps=qps, model=model,
                         per_image=args.per_image, names=list(imgs))
    out = args.out or f"dataset_{size[0]}x{size[1]}.npz"
    ds.save(out)
    print(f"wrote {len(ds)} triples to {out}")


def cmd_train_nn(args):
    ds = Dataset.load(args.dataset)
    held = Dataset.load(args.held_out) if args.held_out else None
    out = Path(args.models or args.out or "models")
    existing = ModelSet.load(out) if out.exists() else ModelSet()
    if ds.size in existing:
        model = existing[ds.size].copy()
    else:
        model = architecture(*ds.size).init_weights(args.seed)
    if args.warmup:
        bank = _bank(args)
        train(model, ds, args.warmup, args.batch_size, args.lr, args.seed)
        relabel(ds, bank, model)
        if held is not None:
            relabel(held, bank, model)
    res = train(model, ds, args.iterations, args.batch_size, args.lr, args.seed + 1 if args.warmup else args.seed,
                held_out=held, eval_every=args.eval_every, log=print)
    ModelSet([*[m for k, m in existing.models.items() if k != ds.size], res.model]).save(out)
    np.savetxt(out / f"loss_{ds.size[0]}x{ds.size[1]}.txt", res.loss, fmt="%.10g")
    print(f"saved f_{ds.size[0]}x{ds.size[1]} to {out}")


def _cfg(args) -> RDConfig:
    return RDConfig(qp=args.qp if args.qp is not None else 32, scheme=args.scheme,
                    classic_modes="full" if args.full_modes else "reduced",
                    nn_enabled=not args.no_nn, rect_splits=args.rect)


def cmd_encode(args):
    img = corpus.read_image(args.input, args.width, args.height)
    res = encode_image(img, _cfg(args), _models(args), _bank(args))
    out = args.out or str(Path(args.input).with_suffix(".ntc"))
    Path(out).write_bytes(res.bitstream)
    if args.recon:
        corpus.write_pgm(args.recon, res.recon)
    print(f"wrote {out}: {res.bits} bits, {res.bits / img.size:.4f} bpp")


def cmd_decode(args):
    res = decode_image(Path(args.input).read_bytes(), _models(args), _bank(args))
    out = args.out or str(Path(args.input).with_suffix(".pgm"))
    corpus.write_pgm(out, res.plane, res.header.bitdepth)
    print(f"wrote {out}")


def cmd_eval(args):
    if args.images:
        imgs = corpus.load_directory(args.images)
    else:
        imgs = {f"img{i:02d}": im for i, im in
                enumerate(corpus.mixed_corpus(args.count, args.crop, args.crop, args.seed))}
    qps = (args.qp,) if args.qp is not None else EXPERIMENT_QPS
    schemes = args.schemes or ([args.scheme] if args.scheme_given else SCHEMES)
    run_experiment(imgs, schemes, qps, _models(args), _bank(args), args.out or "report",
                   classic_modes="full" if args.full_modes else "reduced",
                   nn_enabled=not args.no_nn, rect_splits=args.rect, log=print)
    print((Path(args.out or "report") / "summary.txt").read_text())


def _common(p):
    p.add_argument("--qp", type=int, default=None)
    p.add_argument("--scheme", choices=SCHEMES, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--models", help="directory of f_HxW.nnw weight files")
    p.add_argument("--bank", help="transform bank file")
    p.add_argument("--out")


def _coding(p):
    p.add_argument("--full-modes", action="store_true", help="search all 67 classic modes")
    p.add_argument("--no-nn", action="store_true")
    p.add_argument("--rect", action="store_true", help="allow binary rectangular splits")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nnlfnst")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-bank", help="train the secondary-transform bank on a corpus")
    _common(p)
    p.add_argument("--images")
    p.add_argument("--per-image", type=int, default=1500)
    p.set_defaults(func=cmd_train_bank)

    p = sub.add_parser("collect-dataset", help="collect training triples for one block size")
    _common(p)
    p.add_argument("--images")
    p.add_argument("--held-out", action="store_true", help="use the held-out corpus images")
    p.add_argument("--size", default="4x4")
    p.add_argument("--per-image", type=int, default=7000)
    p.set_defaults(func=cmd_collect_dataset)

    p = sub.add_parser("train-nn", help="train one network on a dataset")
    _common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--held-out")
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--warmup", type=int, default=0,
                   help="iterations before relabeling against the network residual")
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--eval-every", type=int, default=1000)
    p.set_defaults(func=cmd_train_nn)

    p = sub.add_parser("encode", help="encode an 8-bit luma image")
    _common(p)
    _coding(p)
    p.add_argument("input")
    p.add_argument("--recon", help="also write the reconstruction as PGM")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a stream to PGM")
    _common(p)
    p.add_argument("input")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="run all schemes over QPs and write CSV + summary")
    _common(p)
    _coding(p)
    p.add_argument("--images")
    p.add_argument("--schemes", nargs="+", choices=SCHEMES)
    p.add_argument("--count", type=int, default=20, help="synthetic/natural mix size")
    p.add_argument("--crop", type=int, default=64)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.scheme_given = args.scheme is not None
    if args.scheme is None:
        args.scheme = SignalingScheme.INFERENCE.value
    args.func(args)


if __name__ == "__main__":
    main()
