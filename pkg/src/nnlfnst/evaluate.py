"""PSNR, Bjontegaard delta rate, held-out scheme analysis and the experiment
driver that writes CSV reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import RDConfig, decode_image, encode_image, nn_candidate_costs
from .entropy import tb_length
from .predictor import ModelSet
from .signaling import NUM_PAIRS, SignalingScheme
from .transforms import TransformBank

EXPERIMENT_QPS = (22, 27, 32, 37)
SYNTAX_ELEMENTS = ("header", "split_flag", "rect_split", "mode_flag", "classic_mode", "lfnst_idx",
                   "pair_idx", "cbf", "last_pos", "coeff", "padding")


def psnr(a: np.ndarray, b: np.ndarray, bitdepth: int = 8) -> float:
    """Peak signal-to-noise ratio in dB; math.inf for identical planes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"plane shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float((1 << bitdepth) - 1)
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class RDPoint:
    rate: float
    psnr: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if not math.isfinite(self.psnr):
            raise ValueError("PSNR must be finite for curve fitting")


def _fit(points):
    r = np.array([p.rate for p in points], dtype=np.float64)
    q = np.array([p.psnr for p in points], dtype=np.float64)
    if len(points) < 4:
        raise ValueError("BD-rate needs at least 4 points per curve")
    return np.polyfit(q, np.log(r), 3), q.min(), q.max()


def bd_rate(anchor, test) -> float:
    """Average rate difference of test against anchor at equal PSNR, in percent.

    Classic Bjontegaard: cubic fit of log-rate over PSNR per curve, both
    integrated over the overlapping PSNR interval.
    """
    pa, lo_a, hi_a = _fit(anchor)
    pt, lo_t, hi_t = _fit(test)
    lo, hi = max(lo_a, lo_t), min(hi_a, hi_t)
    if not hi > lo:
        raise ValueError("RD curves have no overlapping PSNR range")
    ia, it = np.polyint(pa), np.polyint(pt)
    avg = ((np.polyval(it, hi) - np.polyval(it, lo)) - (np.polyval(ia, hi) - np.polyval(ia, lo))) / (hi - lo)
    return (math.exp(avg) - 1.0) * 100.0


# ---------------------------------------------------------------------------
# Held-out block analysis of the pair-signaling schemes


@dataclass
class SchemeStats:
    mean_cost: float
    lfnst_blocks: int
    mean_pair_bits: float       # per NN-LFNST block; nan without any
    remainder_hits: int = 0


def heldout_analysis(orig: np.ndarray, preds: np.ndarray, logits: np.ndarray, qps,
                     bank: TransformBank, bitdepth: int = 8) -> dict:
    """Per-scheme RD statistics of network-predicted blocks.

    For every block each scheme takes its RD-best candidate among lfnstIdx 0
    and the pairs it may signal, paying its own pair-syntax rate. "oracle" is
    Inference with the RD-optimal pair substituted for the classifier's.
    """
    orig = np.asarray(orig)
    qps = np.asarray(qps)
    n = len(orig)
    out = {k: (np.empty(n), np.zeros(n, dtype=bool), np.zeros(n), np.zeros(n, dtype=bool))
           for k in ("default", "inference", "oracle", "explicit", "prediction")}
    tb = np.array([tb_length(k, NUM_PAIRS) for k in range(NUM_PAIRS)], dtype=np.float64)
    rows = np.arange(n)
    for qp in np.unique(qps):
        sel = np.flatnonzero(qps == qp)
        c = nn_candidate_costs(orig[sel], preds[sel], int(qp), bank, bitdepth)
        lam = c.lam
        u = logits[sel]
        r = rows[:len(sel)]
        pred_pairs = np.stack([np.argmax(u[:, :NUM_PAIRS], axis=1),
                               np.argmax(u[:, NUM_PAIRS:], axis=1)], axis=1)
        cand = {}
        zero = np.zeros((len(sel), 2, NUM_PAIRS))
        cand["default"] = (c.pairs[:, :, :1], zero[:, :, :1], None)
        inf_costs = np.stack([c.pairs[r, m, pred_pairs[:, m]] for m in (0, 1)], axis=1)[:, :, None]
        cand["inference"] = (inf_costs, zero[:, :, :1], None)
        cand["oracle"] = (c.pairs, zero, None)
        cand["explicit"] = (c.pairs + lam * tb, tb + zero, None)
        rem = (np.arange(NUM_PAIRS)[None, None, :] - pred_pairs[:, :, None]) % NUM_PAIRS
        cand["prediction"] = (c.pairs + lam * tb[rem], tb[rem], rem == 0)
        for name, (costs, bits, hit) in cand.items():
            flat = costs.reshape(len(sel), -1)
            k = np.argmin(flat, axis=1)
            best = flat[r, k]
            use = best < c.base
            cost, used, pbits, hits = out[name]
            cost[sel] = np.where(use, best, c.base)
            used[sel] = use
            pbits[sel] = np.where(use, bits.reshape(len(sel), -1)[r, k], 0.0)
            if hit is not None:
                hits[sel] = use & hit.reshape(len(sel), -1)[r, k]
    result = {}
    for name, (cost, used, pbits, hits) in out.items():
        nl = int(used.sum())
        result[name] = SchemeStats(float(cost.mean()) if n else math.nan, nl,
                                   float(pbits[used].mean()) if nl else math.nan, int(hits.sum()))
    return result


# ---------------------------------------------------------------------------
# Experiment driver


@dataclass
class ExperimentRow:
    image: str
    scheme: str
    qp: int
    bits: int
    bpp: float
    psnr: float
    leaves: int
    nn_usage: float
    lfnst_usage: float
    nn_lfnst_blocks: int
    pair_bits: int
    remainder_hit_rate: float
    elements: dict

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("image", "scheme", "qp", "bits", "bpp", "psnr", "leaves",
                                           "nn_usage", "lfnst_usage", "nn_lfnst_blocks", "pair_bits",
                                           "remainder_hit_rate")}
        for e in SYNTAX_ELEMENTS:
            d[f"bits_{e}"] = self.elements.get(e, 0)
        return d


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf"
        return f"{v:.6f}"
    return str(v)


def run_experiment(images: dict, schemes, qps=EXPERIMENT_QPS, models: ModelSet | None = None,
                   bank: TransformBank | None = None, out_dir=None, verify: bool = True,
                   log=None, **cfg_kw) -> list:
    """Encode every image under every scheme and QP; optionally decode and
    check bit-exactness. Writes report.csv and summary.txt into out_dir."""
    if bank is None:
        raise ValueError("a transform bank is required")
    rows = []
    for name in sorted(images):
        img = images[name]
        for scheme in schemes:
            scheme = SignalingScheme(scheme)
            for qp in qps:
                cfg = RDConfig(qp=qp, scheme=scheme, **cfg_kw)
                enc = encode_image(img, cfg, models, bank)
                if verify:
                    dec = decode_image(enc.bitstream, models, bank)
                    if not np.array_equal(dec.plane, enc.recon):
                        raise AssertionError(f"decoder mismatch on {name} {scheme.value} QP{qp}")
                if sum(enc.tally.values()) != enc.bits:
                    raise AssertionError("syntax-element bits do not add up to the stream size")
                st = enc.stats
                rows.append(ExperimentRow(
                    name, scheme.value, qp, enc.bits, enc.bits / img.size,
                    psnr(img, enc.recon, cfg.bitdepth), st.leaves,
                    st.nn_area / st.leaf_area if st.leaf_area else 0.0,
                    st.lfnst_leaves / st.leaves if st.leaves else 0.0,
                    st.nn_lfnst_leaves, st.pair_bits,
                    st.remainder_hits / st.nn_lfnst_leaves if st.nn_lfnst_leaves else math.nan,
                    dict(enc.tally)))
                if log:
                    log(f"{name} {scheme.value} QP{qp}: {enc.bits} bits, {rows[-1].psnr:.2f} dB")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report_csv(rows))
        (out / "summary.txt").write_text(summary_table(rows))
    return rows


def report_csv(rows) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    dicts = [r.as_dict() for r in rows]
    w = csv.DictWriter(buf, fieldnames=list(dicts[0]), lineterminator="\n")
    w.writeheader()
    for d in dicts:
        w.writerow({k: _fmt(v) for k, v in d.items()})
    return buf.getvalue()


def summary_table(rows) -> str:
    """Plain-text per-scheme summary with BD-rate against the default scheme."""
    lines = ["BD-rate: classic cubic fit of log-rate over PSNR, overlap interval.", ""]
    schemes = sorted({r.scheme for r in rows})
    images = sorted({r.image for r in rows})
    by = {(r.image, r.scheme): [] for r in rows}
    for r in rows:
        by[(r.image, r.scheme)].append(r)
    lines.append(f"{'scheme':<12}{'bits':>12}{'psnr':>9}{'nn%':>8}{'lfnst%':>8}{'pairbits':>10}{'BD vs default':>15}")
    for s in schemes:
        sel = [r for r in rows if r.scheme == s]
        bds = []
        for img in images:
            a, t = by.get((img, "default")), by.get((img, s))
            if a and t and len(a) >= 4 and len(t) >= 4:
                try:
                    bds.append(bd_rate([RDPoint(x.bits, x.psnr) for x in a],
                                       [RDPoint(x.bits, x.psnr) for x in t]))
                except ValueError:
                    pass
        finite = [r.psnr for r in sel if math.isfinite(r.psnr)]
        bd = f"{np.mean(bds):+.3f}%" if bds else "n/a"
        lines.append(f"{s:<12}{np.mean([r.bits for r in sel]):>12.1f}"
                     f"{np.mean(finite) if finite else math.inf:>9.3f}"
                     f"{100 * np.mean([r.nn_usage for r in sel]):>8.2f}"
                     f"{100 * np.mean([r.lfnst_usage for r in sel]):>8.2f}"
                     f"{np.mean([r.pair_bits for r in sel]):>10.2f}{bd:>15}")
    return "\n".join(lines) + "\n"
