import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import TABLE, table_oracle as _oracle
from nnlfnst.entropy import BitCounter, BitReader, BitWriter
from nnlfnst.signaling import (LFNST_CODES, NUM_PAIRS, PAIR_SPECS, PairSpec, SignalingScheme,
                               decode_remainder, encode_remainder, lfnst_idx_bits, mode_to_pair,
                               oriented_pair, pair_candidates, pair_from_logits,
                               pair_index_to_spec, pair_syntax_bits, parse_pair,
                               read_lfnst_idx, remainder, signal_pair, spec_to_pair_index,
                               write_lfnst_idx)

@pytest.mark.parametrize("mode", list(range(-14, 84)))
def test_mode_to_pair_matches_table(mode):
    spec, idx = mode_to_pair(mode)
    k = _oracle(mode)
    assert idx == k
    assert spec == PairSpec(TABLE[k][1], TABLE[k][2])


@pytest.mark.parametrize("mode", [-15, 84, 100])
def test_mode_to_pair_rejects_out_of_range(mode):
    with pytest.raises(ValueError):
        mode_to_pair(mode)


def test_table_ranges_partition_the_domain():
    union = set()
    for modes, _, _ in TABLE:
        assert not union & modes
        union |= modes
    assert union == set(range(-14, 84))


def test_pair_index_bijection():
    specs = [pair_index_to_spec(k) for k in range(NUM_PAIRS)]
    assert len(set(specs)) == NUM_PAIRS
    assert [spec_to_pair_index(s) for s in specs] == list(range(NUM_PAIRS))
    assert tuple(specs) == PAIR_SPECS
    with pytest.raises(ValueError):
        pair_index_to_spec(7)
    with pytest.raises(ValueError):
        spec_to_pair_index(PairSpec(0, True))


def test_oriented_pair_flips_transpose_except_set_zero():
    for k in range(NUM_PAIRS):
        s = pair_index_to_spec(k)
        assert oriented_pair(k, False) == s
        t = oriented_pair(k, True)
        assert t.set_index == s.set_index
        assert t.transpose == (s.transpose if s.set_index == 0 else not s.transpose)


def test_remainder_grid_exhaustive():
    for exp in range(NUM_PAIRS):
        for pred in range(NUM_PAIRS):
            w = BitWriter()
            encode_remainder(exp, pred, w)
            assert w.bits_written == (2 if exp == pred else 3)
            assert remainder(exp, pred) == (exp - pred) % 7
            assert decode_remainder(pred, BitReader(w.getvalue())) == exp


def test_lfnst_idx_codes():
    assert {k: v for k, v in LFNST_CODES.items()} == {0: (0, 1), 1: (0b10, 2), 2: (0b11, 2)}
    for k in range(3):
        w = BitWriter()
        write_lfnst_idx(w, k)
        assert w.bits_written == lfnst_idx_bits(k)
        assert read_lfnst_idx(BitReader(w.getvalue())) == k


def test_pair_from_logits_heads_and_ties():
    u = np.zeros(14)
    assert pair_from_logits(u, 1) == 0
    u[3] = 1.0
    u[7 + 5] = 2.0
    assert pair_from_logits(u, 1) == 3
    assert pair_from_logits(u, 2) == 5
    u[6] = 1.0
    assert pair_from_logits(u, 1) == 3
    with pytest.raises(ValueError):
        pair_from_logits(u, 0)
    with pytest.raises(ValueError):
        pair_from_logits(np.zeros(13), 1)


def test_scheme_codes_roundtrip():
    for s in SignalingScheme:
        assert SignalingScheme.from_code(s.code) is s
    with pytest.raises(ValueError):
        SignalingScheme.from_code(9)


@given(st.sampled_from(list(SignalingScheme)), st.integers(0, 6), st.integers(0, 6))
def test_signal_parse_roundtrip(scheme, pair, pred):
    if pair not in pair_candidates(scheme, pred):
        with pytest.raises(ValueError):
            signal_pair(scheme, pair, pred, BitWriter())
        return
    w = BitWriter()
    bits = signal_pair(scheme, pair, pred, w)
    c = BitCounter()
    signal_pair(scheme, pair, pred, c)
    assert bits == w.bits_written == c.bits_written == pair_syntax_bits(scheme, pair, pred)
    r = BitReader(w.getvalue())
    assert parse_pair(scheme, pred, r) == pair
    assert r.pos == bits


def test_default_and_inference_cost_no_bits():
    for pred in range(NUM_PAIRS):
        assert pair_candidates(SignalingScheme.DEFAULT, pred) == (0,)
        assert pair_candidates(SignalingScheme.INFERENCE, pred) == (pred,)
        assert pair_syntax_bits(SignalingScheme.DEFAULT, 0, pred) == 0
        assert pair_syntax_bits(SignalingScheme.INFERENCE, pred, pred) == 0
