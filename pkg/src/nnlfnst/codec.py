"""Quadtree intra encoder/decoder with RD mode and secondary-transform search.

Bitstream layout: a fixed header followed by the CTU quadtrees in raster
order. Per leaf block: [mode flag] [classic mode, 7 bits] lfnstIdx
[pair syntax] coefficients. The mode flag exists only when the network mode
can serve the block; pair syntax only for network blocks with lfnstIdx != 0,
depending on the signaling scheme. With lfnstIdx != 0 the coefficient payload
is the 4x4 block of secondary coefficients.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .classic import NUM_MODES, REDUCED_MODES, predict_classic, wide_angle_remap
from .context import ContextSpec, extract_context
from .entropy import (BitCounter, BitReader, BitstreamError, BitWriter, code_coefficients,
                      coefficient_bits, coefficient_bits_batch, decode_coefficients,
                      dequantize, quantize, qstep)
from .predictor import ModelSet, predict_nn
from .signaling import (NUM_PAIRS, PairSpec, SignalingScheme, lfnst_idx_bits, mode_to_pair,
                        oriented_pair, pair_candidates, pair_from_logits, pair_index_to_spec,
                        pair_syntax_bits, parse_pair, read_lfnst_idx, signal_pair,
                        write_lfnst_idx)
from .transforms import (TransformBank, block_to_secondary, dct2_forward, dct2_inverse,
                         gather_region, kernel_family, scatter_region,
                         secondary_forward, secondary_inverse, secondary_to_block)

MAGIC = b"NTC1"
VERSION = 1
HEADER_FORMAT = "<4sBHHBBBBQQ"
CTU_SIZE = 64
MIN_BLOCK = 4
CLASSIC_MODE_BITS = 7

FLAG_NN = 1
FLAG_RECT = 2

RECT_NONE, RECT_HOR, RECT_VER = 0, 1, 2
_RECT_CODES = {RECT_NONE: (0, 1), RECT_HOR: (0b10, 2), RECT_VER: (0b11, 2)}


class CodecError(ValueError):
    pass


def rd_lambda(qp: int) -> float:
    return 0.57 * 2.0 ** ((qp - 12) / 3.0)


@dataclass
class RDConfig:
    qp: int = 32
    scheme: SignalingScheme = SignalingScheme.INFERENCE
    classic_modes: tuple = REDUCED_MODES
    nn_enabled: bool = True
    rect_splits: bool = False
    bitdepth: int = 8
    # analysis only: network blocks take the RD-optimal pair at zero rate
    oracle_pairs: bool = False

    def __post_init__(self):
        self.scheme = SignalingScheme(self.scheme)
        if self.classic_modes == "full":
            self.classic_modes = tuple(range(NUM_MODES))
        elif self.classic_modes == "reduced":
            self.classic_modes = REDUCED_MODES
        self.classic_modes = tuple(self.classic_modes)

    @property
    def lam(self) -> float:
        return rd_lambda(self.qp)

    @property
    def max_value(self) -> int:
        return (1 << self.bitdepth) - 1


@dataclass
class ReconState:
    plane: np.ndarray
    decoded: np.ndarray
    bitdepth: int = 8

    @classmethod
    def empty(cls, height: int, width: int, bitdepth: int = 8) -> "ReconState":
        return cls(np.zeros((height, width), dtype=np.int64),
                   np.zeros((height, width), dtype=bool), bitdepth)

    @classmethod
    def from_plane(cls, plane: np.ndarray, bitdepth: int = 8) -> "ReconState":
        """A fully decoded state, e.g. for analysing single blocks."""
        p = np.asarray(plane, dtype=np.int64)
        return cls(p.copy(), np.ones(p.shape, dtype=bool), bitdepth)

    def save(self, y: int, x: int, h: int, w: int):
        return (y, x, self.plane[y:y + h, x:x + w].copy(), self.decoded[y:y + h, x:x + w].copy())

    def restore(self, snap):
        y, x, p, d = snap
        self.plane[y:y + p.shape[0], x:x + p.shape[1]] = p
        self.decoded[y:y + p.shape[0], x:x + p.shape[1]] = d

    def commit(self, y: int, x: int, block: np.ndarray):
        h, w = block.shape
        self.plane[y:y + h, x:x + w] = block
        self.decoded[y:y + h, x:x + w] = True


@dataclass
class BlockSyntax:
    h: int
    w: int
    nn_available: bool
    use_nn: bool
    classic_mode: int | None
    lfnst_idx: int
    pair_idx: int | None        # coded or implied pair index (network frame for NN blocks)
    predicted_pair: int | None  # network argmax for the chosen lfnstIdx
    levels: np.ndarray

    def pair_spec(self, transposed: bool = False) -> PairSpec | None:
        if self.lfnst_idx == 0:
            return None
        if self.use_nn:
            return oriented_pair(self.pair_idx, transposed)
        return pair_index_to_spec(self.pair_idx)


def write_block_syntax(syntax: BlockSyntax, scheme: SignalingScheme, writer):
    if syntax.nn_available:
        writer.write(int(syntax.use_nn), 1, "mode_flag")
    elif syntax.use_nn:
        raise CodecError("network mode used where it is unavailable")
    if not syntax.use_nn:
        writer.write(syntax.classic_mode, CLASSIC_MODE_BITS, "classic_mode")
    write_lfnst_idx(writer, syntax.lfnst_idx)
    if syntax.use_nn and syntax.lfnst_idx:
        signal_pair(scheme, syntax.pair_idx, syntax.predicted_pair, writer)
    code_coefficients(syntax.levels, writer)


def syntax_bits(syntax: BlockSyntax, scheme: SignalingScheme) -> int:
    counter = BitCounter()
    write_block_syntax(syntax, scheme, counter)
    return counter.bits_written


def reconstruct(pred: np.ndarray, levels: np.ndarray, qp: int, lfnst_idx: int,
                pair: PairSpec | None, bank: TransformBank, bitdepth: int = 8) -> np.ndarray:
    """Decoder-side reconstruction shared by the encoder."""
    h, w = pred.shape
    coeffs = dequantize(levels, qp)
    if lfnst_idx:
        coeffs = secondary_inverse(block_to_secondary(coeffs), h, w, pair, lfnst_idx, bank)
    res = dct2_inverse(coeffs)
    return np.clip(np.rint(pred + res), 0, (1 << bitdepth) - 1).astype(np.int64)


def residual_levels(primary: np.ndarray, qp: int, lfnst_idx: int, pair: PairSpec | None,
                    bank: TransformBank) -> np.ndarray:
    if lfnst_idx == 0:
        return quantize(primary, qp)
    return quantize(secondary_to_block(secondary_forward(primary, pair, lfnst_idx, bank)), qp)


@dataclass
class _Candidate:
    cost: float
    syntax: BlockSyntax
    recon: np.ndarray
    bits: int
    sse: int


@dataclass
class BlockResult:
    syntax: BlockSyntax
    recon: np.ndarray
    cost: float
    sse: int
    bits: int
    nn_output: object = None


def _evaluate(orig, pred, primary, lfnst_idx, pair, head_bits, cfg, bank, make_syntax):
    levels = residual_levels(primary, cfg.qp, lfnst_idx, pair, bank)
    if lfnst_idx and not levels.any():
        return None
    recon = reconstruct(pred, levels, cfg.qp, lfnst_idx, pair, bank, cfg.bitdepth)
    diff = orig - recon
    sse = int(np.sum(diff * diff))
    bits = head_bits + lfnst_idx_bits(lfnst_idx) + coefficient_bits(levels)
    return _Candidate(sse + cfg.lam * bits, make_syntax(levels), recon, bits, sse)


def encode_block(original: np.ndarray, state: ReconState, pos: tuple[int, int], h: int, w: int,
                 cfg: RDConfig, models: ModelSet | None, bank: TransformBank) -> BlockResult:
    """RD-optimal leaf coding of one block; the state is not modified.

    The returned cost is SSE(original, recon) + lambda * (exact leaf bits),
    split/partition flags excluded.
    """
    y, x = pos
    orig = np.asarray(original[y:y + h, x:x + w], dtype=np.int64)
    nn_out = None
    if cfg.nn_enabled and models is not None and len(models):
        nn_out = predict_nn(state.plane, pos, h, w, models, cfg.bitdepth, state.decoded)
    nn_available = nn_out is not None
    flag_bits = 1 if nn_available else 0
    best = None

    def consider(cand):
        nonlocal best
        if cand is not None and (best is None or cand.cost < best.cost):
            best = cand

    if cfg.classic_modes:
        ctx = extract_context(state.plane, pos, ContextSpec(1, 1, h, w), cfg.bitdepth, state.decoded)
    for mode in cfg.classic_modes:
        pred = predict_classic(ctx, mode, h, w)
        primary = dct2_forward(orig - pred)
        spec, pair_idx = mode_to_pair(wide_angle_remap(mode, h, w))
        head = flag_bits + CLASSIC_MODE_BITS
        for lf in (0, 1, 2):
            consider(_evaluate(
                orig, pred, primary, lf, spec if lf else None, head, cfg, bank,
                lambda lv, lf=lf, mode=mode, pi=pair_idx: BlockSyntax(
                    h, w, nn_available, False, mode, lf, pi if lf else None, None, lv)))

    if nn_available:
        pred = nn_out.prediction
        primary = dct2_forward(orig - pred)
        transposed = nn_out.geometry.transpose
        consider(_evaluate(orig, pred, primary, 0, None, flag_bits, cfg, bank,
                           lambda lv: BlockSyntax(h, w, True, True, None, 0, None, None, lv)))
        for lf in (1, 2):
            predicted = pair_from_logits(nn_out.logits, lf)
            if cfg.oracle_pairs:
                cands = range(NUM_PAIRS)
            else:
                cands = pair_candidates(cfg.scheme, predicted)
            for k in cands:
                pbits = 0 if cfg.oracle_pairs else pair_syntax_bits(cfg.scheme, k, predicted)
                consider(_evaluate(
                    orig, pred, primary, lf, oriented_pair(k, transposed), flag_bits + pbits,
                    cfg, bank,
                    lambda lv, lf=lf, k=k, p=predicted: BlockSyntax(h, w, True, True, None, lf, k, p, lv)))

    if best is None:
        raise CodecError(f"no coding candidate for the {h}x{w} block at {pos}")
    bits = best.bits if cfg.oracle_pairs else syntax_bits(best.syntax, cfg.scheme)
    if bits != best.bits:
        raise AssertionError("bit estimate disagrees with the syntax writer")
    return BlockResult(best.syntax, best.recon, best.sse + cfg.lam * bits, best.sse, bits, nn_out)


def decode_block(reader: BitReader, state: ReconState, pos: tuple[int, int], h: int, w: int,
                 cfg: RDConfig, models: ModelSet | None, bank: TransformBank):
    """Parse one leaf, reconstruct it and commit it to the state."""
    nn_available = bool(cfg.nn_enabled and models is not None and len(models)
                        and models.geometry_for(h, w) is not None)
    use_nn = bool(reader.read(1, "mode_flag")) if nn_available else False
    mode = None
    if not use_nn:
        start = reader.pos
        mode = reader.read(CLASSIC_MODE_BITS, "classic_mode")
        if mode >= NUM_MODES:
            raise BitstreamError(f"classic mode {mode} out of range", "classic_mode", start)
    lfnst_idx = read_lfnst_idx(reader)
    pair = None
    pair_idx = predicted = None
    if use_nn:
        out = predict_nn(state.plane, pos, h, w, models, cfg.bitdepth, state.decoded)
        pred = out.prediction
        if lfnst_idx:
            predicted = pair_from_logits(out.logits, lfnst_idx)
            pair_idx = parse_pair(cfg.scheme, predicted, reader)
            pair = oriented_pair(pair_idx, out.geometry.transpose)
    else:
        ctx = extract_context(state.plane, pos, ContextSpec(1, 1, h, w), cfg.bitdepth, state.decoded)
        pred = predict_classic(ctx, mode, h, w)
        if lfnst_idx:
            pair, pair_idx = mode_to_pair(wide_angle_remap(mode, h, w))
    if lfnst_idx:
        levels = decode_coefficients(reader, 4, 4)
    else:
        levels = decode_coefficients(reader, h, w)
    recon = reconstruct(pred, levels, cfg.qp, lfnst_idx, pair, bank, cfg.bitdepth)
    state.commit(pos[0], pos[1], recon)
    syntax = BlockSyntax(h, w, nn_available, use_nn, mode, lfnst_idx, pair_idx, predicted, levels)
    return recon, syntax


# ---------------------------------------------------------------------------
# Vectorized RD evaluation of network-predicted blocks (dataset labels and
# held-out analysis). Mirrors encode_block's network branch.


@dataclass
class CandidateCosts:
    """Per-block RD costs of a network-predicted block.

    base[n] is the lfnstIdx = 0 cost; pairs[n, m - 1, k] the cost with
    lfnstIdx = m and pair k at zero pair-signaling rate (inf when the
    quantized secondary coefficients are all zero). bits_* hold the matching
    rates, without mode flag.
    """
    base: np.ndarray
    pairs: np.ndarray
    base_bits: np.ndarray
    pair_bits: np.ndarray
    lam: float


def nn_candidate_costs(originals: np.ndarray, predictions: np.ndarray, qp: int,
                       bank: TransformBank, bitdepth: int = 8, transposed: bool = False,
                       batch: int = 4096) -> CandidateCosts:
    orig = np.asarray(originals, dtype=np.int64)
    preds = np.asarray(predictions, dtype=np.int64)
    n, h, w = orig.shape
    lam = rd_lambda(qp)
    maxv = (1 << bitdepth) - 1
    family = kernel_family(h, w)
    step = qstep(qp)
    base = np.empty(n)
    base_bits = np.empty(n, dtype=np.int64)
    pairs = np.empty((n, 2, NUM_PAIRS))
    pair_bits = np.zeros((n, 2, NUM_PAIRS), dtype=np.int64)
    for s in range(0, n, batch):
        o = orig[s:s + batch]
        p = preds[s:s + batch]
        primary = dct2_forward((o - p).astype(np.float64))
        lv = quantize(primary, qp)
        rec = np.clip(np.rint(p + dct2_inverse(lv * step)), 0, maxv)
        sse = np.sum((o - rec) ** 2, axis=(1, 2))
        bits = 1 + coefficient_bits_batch(lv)
        base[s:s + batch] = sse + lam * bits
        base_bits[s:s + batch] = bits
        for k in range(NUM_PAIRS):
            spec = oriented_pair(k, transposed)
            region = gather_region(primary, family, spec.transpose)
            for m in (1, 2):
                mat = bank.matrix(family, spec.set_index, m)
                sec_lv = quantize(secondary_to_block(region @ mat.T), qp)
                sec = block_to_secondary(sec_lv * step)
                prim = scatter_region(sec @ mat, h, w, family, spec.transpose)
                rec = np.clip(np.rint(p + dct2_inverse(prim)), 0, maxv)
                sse = np.sum((o - rec) ** 2, axis=(1, 2))
                bits = 2 + coefficient_bits_batch(sec_lv)
                cost = sse + lam * bits
                cost[~sec_lv.reshape(len(o), -1).any(axis=1)] = np.inf
                pairs[s:s + batch, m - 1, k] = cost
                pair_bits[s:s + batch, m - 1, k] = bits
    return CandidateCosts(base, pairs, base_bits, pair_bits, lam)


# ---------------------------------------------------------------------------
# Picture level


@dataclass
class Header:
    width: int
    height: int
    bitdepth: int
    qp: int
    scheme: SignalingScheme
    flags: int
    model_hash: int
    bank_hash: int

    def pack(self) -> bytes:
        return struct.pack(HEADER_FORMAT, MAGIC, VERSION, self.width, self.height, self.bitdepth,
                           self.qp, self.scheme.code, self.flags, self.model_hash, self.bank_hash)

    @classmethod
    def unpack(cls, data: bytes) -> "Header":
        size = struct.calcsize(HEADER_FORMAT)
        if len(data) < size:
            raise BitstreamError("stream shorter than its header", "header", 8 * len(data))
        magic, version, w, h, bd, qp, scheme, flags, mh, bh = struct.unpack_from(HEADER_FORMAT, data)
        if magic != MAGIC:
            raise BitstreamError("bad magic", "header", 0)
        if version != VERSION:
            raise BitstreamError(f"unsupported version {version}", "header", 32)
        try:
            scheme = SignalingScheme.from_code(scheme)
        except ValueError as exc:
            raise BitstreamError(str(exc), "header", 8 * 11) from None
        return cls(w, h, bd, qp, scheme, flags, mh, bh)


HEADER_BYTES = struct.calcsize(HEADER_FORMAT)


@dataclass
class CodingStats:
    leaves: int = 0
    nn_leaves: int = 0
    lfnst_leaves: int = 0
    nn_lfnst_leaves: int = 0
    remainder_hits: int = 0
    pair_bits: int = 0
    leaf_area: int = 0
    nn_area: int = 0

    def add(self, syntax: BlockSyntax, scheme: SignalingScheme):
        self.leaves += 1
        self.leaf_area += syntax.h * syntax.w
        if syntax.use_nn:
            self.nn_leaves += 1
            self.nn_area += syntax.h * syntax.w
        if syntax.lfnst_idx:
            self.lfnst_leaves += 1
            if syntax.use_nn:
                self.nn_lfnst_leaves += 1
                if syntax.pair_idx == syntax.predicted_pair:
                    self.remainder_hits += 1
                self.pair_bits += pair_syntax_bits(scheme, syntax.pair_idx, syntax.predicted_pair)


@dataclass
class EncodeResult:
    bitstream: bytes
    recon: np.ndarray
    tally: Counter
    stats: CodingStats
    cost: float

    @property
    def bits(self) -> int:
        return 8 * len(self.bitstream)


@dataclass
class _Leaf:
    rect: int
    blocks: list        # [(y, x, BlockSyntax)]


@dataclass
class _Split:
    children: list = field(default_factory=list)


def _padded(n: int) -> int:
    return -(-n // MIN_BLOCK) * MIN_BLOCK


def _rect_parts(y, x, size, rect):
    if rect == RECT_NONE:
        return [(y, x, size, size)]
    if rect == RECT_HOR:
        half = size // 2
        return [(y, x, half, size), (y + half, x, half, size)]
    half = size // 2
    return [(y, x, size, half), (y, x + half, size, half)]


class Encoder:
    def __init__(self, image: np.ndarray, cfg: RDConfig, models: ModelSet | None,
                 bank: TransformBank):
        img = np.asarray(image, dtype=np.int64)
        if img.ndim != 2:
            raise CodecError("only single-plane (luma) images are supported")
        if img.min() < 0 or img.max() > cfg.max_value:
            raise CodecError(f"samples outside the {cfg.bitdepth}-bit range")
        if cfg.oracle_pairs:
            raise CodecError("oracle pair selection is not decodable")
        self.height, self.width = img.shape
        ph, pw = _padded(self.height), _padded(self.width)
        self.original = np.pad(img, ((0, ph - self.height), (0, pw - self.width)), mode="edge")
        self.cfg = cfg
        self.models = models if models is not None and len(models) else None
        self.bank = bank
        self.state = ReconState.empty(ph, pw, cfg.bitdepth)

    def _flags(self) -> int:
        flags = 0
        if self.cfg.nn_enabled and self.models is not None:
            flags |= FLAG_NN
        if self.cfg.rect_splits:
            flags |= FLAG_RECT
        return flags

    def encode(self) -> EncodeResult:
        cfg = self.cfg
        header = Header(self.width, self.height, cfg.bitdepth, cfg.qp, cfg.scheme, self._flags(),
                        self.models.hash64() if self.models is not None else 0,
                        self.bank.hash64())
        enc_cfg = RDConfig(cfg.qp, cfg.scheme, cfg.classic_modes,
                           bool(header.flags & FLAG_NN), cfg.rect_splits, cfg.bitdepth)
        self.cfg = enc_cfg
        writer = BitWriter()
        writer.write_bytes(header.pack(), "header")
        stats = CodingStats()
        total = 0.0
        ph, pw = self.state.plane.shape
        for y in range(0, ph, CTU_SIZE):
            for x in range(0, pw, CTU_SIZE):
                cost, node = self._search(y, x, CTU_SIZE)
                total += cost
                self._write_node(node, y, x, CTU_SIZE, writer, stats)
        self.cfg = cfg
        writer.write(0, -writer.bits_written % 8, "padding")
        recon = self.state.plane[:self.height, :self.width].copy()
        return EncodeResult(writer.getvalue(), recon, writer.tally, stats, total)

    def _inside(self, y, x, size):
        ph, pw = self.state.plane.shape
        return y + size <= ph and x + size <= pw

    def _search(self, y, x, size):
        ph, pw = self.state.plane.shape
        if y >= ph or x >= pw:
            return 0.0, None
        half = size // 2
        quads = [(y, x), (y, x + half), (y + half, x), (y + half, x + half)]
        if not self._inside(y, x, size):
            node = _Split()
            cost = 0.0
            for cy, cx in quads:
                c, child = self._search(cy, cx, half)
                cost += c
                node.children.append(child)
            return cost, node
        lam = self.cfg.lam
        flag_bits = 1 if size > MIN_BLOCK else 0
        snap = self.state.save(y, x, size, size)
        leaf_cost, leaf = self._search_leaf(y, x, size)
        leaf_cost += lam * flag_bits
        if size == MIN_BLOCK:
            return leaf_cost, leaf
        leaf_snap = self.state.save(y, x, size, size)
        self.state.restore(snap)
        split = _Split()
        split_cost = lam * flag_bits
        for cy, cx in quads:
            c, child = self._search(cy, cx, half)
            split_cost += c
            split.children.append(child)
        if split_cost < leaf_cost:
            return split_cost, split
        self.state.restore(leaf_snap)
        return leaf_cost, leaf

    def _code_parts(self, parts):
        cost = 0.0
        blocks = []
        for (by, bx, bh, bw) in parts:
            res = encode_block(self.original, self.state, (by, bx), bh, bw, self.cfg, self.models,
                               self.bank)
            self.state.commit(by, bx, res.recon)
            cost += res.cost
            blocks.append((by, bx, res.syntax))
        return cost, blocks

    def _search_leaf(self, y, x, size):
        rects = [RECT_NONE]
        if self.cfg.rect_splits and size >= 2 * MIN_BLOCK:
            rects += [RECT_HOR, RECT_VER]
        best = None
        snap = self.state.save(y, x, size, size)
        for rect in rects:
            self.state.restore(snap)
            cost, blocks = self._code_parts(_rect_parts(y, x, size, rect))
            if len(rects) > 1:
                cost += self.cfg.lam * _RECT_CODES[rect][1]
            if best is None or cost < best[0]:
                best = (cost, _Leaf(rect, blocks), self.state.save(y, x, size, size))
        self.state.restore(best[2])
        return best[0], best[1]

    def _write_node(self, node, y, x, size, writer, stats):
        if node is None:
            return
        half = size // 2
        if not self._inside(y, x, size):
            for child, (cy, cx) in zip(node.children,
                                       [(y, x), (y, x + half), (y + half, x), (y + half, x + half)]):
                self._write_node(child, cy, cx, half, writer, stats)
            return
        if size > MIN_BLOCK:
            writer.write(int(isinstance(node, _Split)), 1, "split_flag")
        if isinstance(node, _Split):
            for child, (cy, cx) in zip(node.children,
                                       [(y, x), (y, x + half), (y + half, x), (y + half, x + half)]):
                self._write_node(child, cy, cx, half, writer, stats)
            return
        if self.cfg.rect_splits and size >= 2 * MIN_BLOCK:
            code, n = _RECT_CODES[node.rect]
            writer.write(code, n, "rect_split")
        for _, _, syntax in node.blocks:
            write_block_syntax(syntax, self.cfg.scheme, writer)
            stats.add(syntax, self.cfg.scheme)


def encode_image(image: np.ndarray, cfg: RDConfig, models: ModelSet | None,
                 bank: TransformBank) -> EncodeResult:
    return Encoder(image, cfg, models, bank).encode()


@dataclass
class DecodeResult:
    plane: np.ndarray
    header: Header
    tally: Counter
    stats: CodingStats


class Decoder:
    def __init__(self, data: bytes, models: ModelSet | None, bank: TransformBank):
        self.header = Header.unpack(data)
        hd = self.header
        if hd.bank_hash != bank.hash64():
            raise CodecError("transform bank does not match the stream")
        nn = bool(hd.flags & FLAG_NN)
        if nn and (models is None or models.hash64() != hd.model_hash):
            raise CodecError("network models do not match the stream")
        self.models = models if nn else None
        self.bank = bank
        self.cfg = RDConfig(hd.qp, hd.scheme, (), nn, bool(hd.flags & FLAG_RECT), hd.bitdepth)
        self.reader = BitReader(data, 8 * HEADER_BYTES)
        self.state = ReconState.empty(_padded(hd.height), _padded(hd.width), hd.bitdepth)
        self.tally = Counter()
        self.stats = CodingStats()

    def decode(self) -> DecodeResult:
        ph, pw = self.state.plane.shape
        for y in range(0, ph, CTU_SIZE):
            for x in range(0, pw, CTU_SIZE):
                self._node(y, x, CTU_SIZE)
        hd = self.header
        return DecodeResult(self.state.plane[:hd.height, :hd.width].copy(), hd, self.tally, self.stats)

    def _node(self, y, x, size):
        ph, pw = self.state.plane.shape
        if y >= ph or x >= pw:
            return
        half = size // 2
        quads = [(y, x), (y, x + half), (y + half, x), (y + half, x + half)]
        if not (y + size <= ph and x + size <= pw):
            for cy, cx in quads:
                self._node(cy, cx, half)
            return
        if size > MIN_BLOCK and self.reader.read(1, "split_flag"):
            for cy, cx in quads:
                self._node(cy, cx, half)
            return
        rect = RECT_NONE
        if self.cfg.rect_splits and size >= 2 * MIN_BLOCK:
            if self.reader.read(1, "rect_split"):
                rect = RECT_HOR + self.reader.read(1, "rect_split")
        for by, bx, bh, bw in _rect_parts(y, x, size, rect):
            _, syntax = decode_block(self.reader, self.state, (by, bx), bh, bw, self.cfg,
                                     self.models, self.bank)
            self.stats.add(syntax, self.cfg.scheme)


def decode_image(data: bytes, models: ModelSet | None, bank: TransformBank) -> DecodeResult:
    return Decoder(data, models, bank).decode()
