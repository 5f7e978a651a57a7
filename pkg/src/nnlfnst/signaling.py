"""Secondary-transform pair indexing and the four pair-signaling schemes.

The seven reachable (transform set, transposition) combinations are indexed by
a pair index in [0, 6]. Classic intra modes map to it through a fixed table of
wide-angle mode ranges; blocks predicted by the network either use a fixed
pair, the network's argmax, or an explicitly coded index (optionally coded as
a remainder against the argmax).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .entropy import read_tb, tb_length, write_tb

NUM_PAIRS = 7
NUM_LOGITS = 2 * NUM_PAIRS

LFNST_CODES = {0: (0, 1), 1: (0b10, 2), 2: (0b11, 2)}


@dataclass(frozen=True)
class PairSpec:
    set_index: int
    transpose: bool


# pair index -> (set, transpose)
PAIR_SPECS = (
    PairSpec(0, False),
    PairSpec(1, False),
    PairSpec(2, False),
    PairSpec(3, False),
    PairSpec(3, True),
    PairSpec(2, True),
    PairSpec(1, True),
)
_SPEC_TO_INDEX = {spec: i for i, spec in enumerate(PAIR_SPECS)}

# inclusive ranges of effective (wide-angle) mode indices per pair index
MODE_RANGES = (
    ((0, 1),),
    ((-14, -1), (2, 12)),
    ((13, 23),),
    ((24, 34),),
    ((35, 44),),
    ((45, 55),),
    ((56, 83),),
)


class SignalingScheme(enum.Enum):
    DEFAULT = "default"
    EXPLICIT = "explicit"
    INFERENCE = "inference"
    PREDICTION = "prediction"

    @property
    def code(self) -> int:
        return _SCHEME_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "SignalingScheme":
        for scheme, c in _SCHEME_CODES.items():
            if c == code:
                return scheme
        raise ValueError(f"unknown scheme code {code}")


_SCHEME_CODES = {
    SignalingScheme.DEFAULT: 0,
    SignalingScheme.EXPLICIT: 1,
    SignalingScheme.INFERENCE: 2,
    SignalingScheme.PREDICTION: 3,
}


def mode_to_pair(effective_mode: int) -> tuple[PairSpec, int]:
    for idx, ranges in enumerate(MODE_RANGES):
        for lo, hi in ranges:
            if lo <= effective_mode <= hi:
                return PAIR_SPECS[idx], idx
    raise ValueError(f"intra mode {effective_mode} is outside every pair group")


def pair_index_to_spec(pair_idx: int) -> PairSpec:
    if not 0 <= pair_idx < NUM_PAIRS:
        raise ValueError(f"pair index {pair_idx} outside [0, 6]")
    return PAIR_SPECS[pair_idx]


def spec_to_pair_index(spec: PairSpec) -> int:
    try:
        return _SPEC_TO_INDEX[spec]
    except KeyError:
        raise ValueError(f"{spec} is not one of the seven pairs") from None


def oriented_pair(pair_idx: int, transposed_geometry: bool) -> PairSpec:
    """Pair actually applied to a network-predicted block.

    The network scores pairs for the residual in its own (possibly transposed)
    frame, so the transposition bit flips back for transposed geometry. Set 0
    has no transposed variant and is left as is.
    """
    spec = pair_index_to_spec(pair_idx)
    if transposed_geometry and spec.set_index != 0:
        return PairSpec(spec.set_index, not spec.transpose)
    return spec


def pair_from_logits(u, lfnst_idx: int) -> int:
    """Argmax of the logit head for lfnst_idx; ties go to the lowest index."""
    u = np.asarray(u)
    if u.shape[-1] != NUM_LOGITS:
        raise ValueError(f"expected {NUM_LOGITS} logits, got {u.shape[-1]}")
    if lfnst_idx == 1:
        head = u[..., :NUM_PAIRS]
    elif lfnst_idx == 2:
        head = u[..., NUM_PAIRS:]
    else:
        raise ValueError("pair prediction only exists for lfnstIdx 1 and 2")
    return int(np.argmax(head))


def remainder(tr_exp_idx: int, tr_pair_idx: int) -> int:
    return (tr_exp_idx - tr_pair_idx) % NUM_PAIRS


def encode_remainder(tr_exp_idx: int, tr_pair_idx: int, writer):
    write_tb(writer, remainder(tr_exp_idx, tr_pair_idx), NUM_PAIRS, "pair_idx")


def decode_remainder(tr_pair_idx: int, reader) -> int:
    r = read_tb(reader, NUM_PAIRS, "pair_idx")
    return (r + tr_pair_idx) % NUM_PAIRS


def write_lfnst_idx(writer, lfnst_idx: int):
    code, n = LFNST_CODES[lfnst_idx]
    writer.write(code, n, "lfnst_idx")


def read_lfnst_idx(reader) -> int:
    if reader.read(1, "lfnst_idx") == 0:
        return 0
    return 1 + reader.read(1, "lfnst_idx")


def lfnst_idx_bits(lfnst_idx: int) -> int:
    return LFNST_CODES[lfnst_idx][1]


# ---------------------------------------------------------------------------
# Scheme-dependent pair syntax for network-predicted blocks


def pair_candidates(scheme: SignalingScheme, predicted: int) -> tuple[int, ...]:
    """Pair indices the encoder may choose from under a scheme."""
    if scheme is SignalingScheme.DEFAULT:
        return (0,)
    if scheme is SignalingScheme.INFERENCE:
        return (predicted,)
    return tuple(range(NUM_PAIRS))


def pair_syntax_bits(scheme: SignalingScheme, pair_idx: int, predicted: int) -> int:
    if scheme is SignalingScheme.EXPLICIT:
        return tb_length(pair_idx, NUM_PAIRS)
    if scheme is SignalingScheme.PREDICTION:
        return tb_length(remainder(pair_idx, predicted), NUM_PAIRS)
    return 0


def signal_pair(scheme: SignalingScheme, pair_idx: int, predicted: int, writer) -> int:
    """Write the pair syntax of a network-predicted block; return bits written."""
    if pair_idx not in pair_candidates(scheme, predicted):
        raise ValueError(f"pair {pair_idx} is not signalable under {scheme.value}")
    before = writer.bits_written
    if scheme is SignalingScheme.EXPLICIT:
        write_tb(writer, pair_idx, NUM_PAIRS, "pair_idx")
    elif scheme is SignalingScheme.PREDICTION:
        encode_remainder(pair_idx, predicted, writer)
    return writer.bits_written - before


def parse_pair(scheme: SignalingScheme, predicted: int, reader) -> int:
    if scheme is SignalingScheme.DEFAULT:
        return 0
    if scheme is SignalingScheme.INFERENCE:
        return predicted
    if scheme is SignalingScheme.EXPLICIT:
        return read_tb(reader, NUM_PAIRS, "pair_idx")
    return decode_remainder(predicted, reader)
