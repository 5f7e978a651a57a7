"""Scalar quantization, bypass-coded syntax elements and the bit-level
reader/writer shared by the encoder and decoder.

Every syntax element is written MSB first. Writers keep a per-element tally
so that reported rates are exact bit counts, never estimates.
"""

from __future__ import annotations

from collections import Counter
from functools import lru_cache

import numpy as np


DEADZONE_OFFSET = 1.0 / 3.0


class BitstreamError(ValueError):
    """Raised on a malformed or truncated bitstream."""

    def __init__(self, message: str, element: str | None = None, offset: int | None = None):
        detail = message
        if element is not None:
            detail += f" (element {element!r}"
            detail += f" at bit {offset})" if offset is not None else ")"
        elif offset is not None:
            detail += f" (at bit {offset})"
        super().__init__(detail)
        self.element = element
        self.offset = offset


class BitWriter:
    def __init__(self):
        self._buf = bytearray()
        self._cur = 0
        self._nbits = 0
        self.bits_written = 0
        self.tally: Counter = Counter()

    def write(self, value: int, nbits: int, element: str = "other"):
        if nbits == 0:
            return
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self.bits_written += nbits
        self.tally[element] += nbits
        cur = (self._cur << nbits) | value
        n = self._nbits + nbits
        while n >= 8:
            n -= 8
            self._buf.append((cur >> n) & 0xFF)
        self._cur = cur & ((1 << n) - 1)
        self._nbits = n

    def write_bytes(self, data: bytes, element: str = "other"):
        for b in data:
            self.write(b, 8, element)

    def getvalue(self) -> bytes:
        """Return the buffer, zero-padded to a byte boundary."""
        out = bytearray(self._buf)
        if self._nbits:
            out.append((self._cur << (8 - self._nbits)) & 0xFF)
        return bytes(out)


class BitCounter:
    """Drop-in for BitWriter that only counts bits."""

    def __init__(self):
        self.bits_written = 0
        self.tally: Counter = Counter()

    def write(self, value: int, nbits: int, element: str = "other"):
        self.bits_written += nbits
        self.tally[element] += nbits


class BitReader:
    def __init__(self, data: bytes, offset_bits: int = 0):
        self._data = data
        self._total = 8 * len(data)
        self.pos = offset_bits

    @property
    def bits_left(self) -> int:
        return self._total - self.pos

    def read(self, nbits: int, element: str = "other") -> int:
        if nbits == 0:
            return 0
        if self.pos + nbits > self._total:
            raise BitstreamError("unexpected end of stream", element, self.pos)
        value = 0
        pos = self.pos
        for _ in range(nbits):
            byte = self._data[pos >> 3]
            value = (value << 1) | ((byte >> (7 - (pos & 7))) & 1)
            pos += 1
        self.pos = pos
        return value


# ---------------------------------------------------------------------------
# Exp-Golomb (order 0)

MAX_EG_PREFIX = 32


def zigzag(v: int) -> int:
    return 2 * v - 1 if v > 0 else -2 * v


def unzigzag(u: int) -> int:
    return (u + 1) // 2 if u & 1 else -(u // 2)


def ue_length(u: int) -> int:
    return 2 * (u + 1).bit_length() - 1


def se_length(v: int) -> int:
    return ue_length(zigzag(v))


def write_ue(writer, u: int, element: str = "ue"):
    if u < 0:
        raise ValueError("unsigned exp-Golomb needs a non-negative value")
    n = (u + 1).bit_length()
    writer.write(0, n - 1, element)
    writer.write(u + 1, n, element)


def read_ue(reader: BitReader, element: str = "ue") -> int:
    start = reader.pos
    zeros = 0
    while reader.read(1, element) == 0:
        zeros += 1
        if zeros > MAX_EG_PREFIX:
            raise BitstreamError("exp-Golomb prefix too long", element, start)
    return (1 << zeros) - 1 + reader.read(zeros, element)


def write_se(writer, v: int, element: str = "se"):
    write_ue(writer, zigzag(v), element)


def read_se(reader: BitReader, element: str = "se") -> int:
    return unzigzag(read_ue(reader, element))


# ---------------------------------------------------------------------------
# Truncated binary


def _tb_params(n: int) -> tuple[int, int]:
    if n < 1:
        raise ValueError("alphabet size must be >= 1")
    k = n.bit_length() - 1
    return k, (1 << (k + 1)) - n


def tb_length(symbol: int, n: int) -> int:
    k, u = _tb_params(n)
    return k if symbol < u else k + 1


def write_tb(writer, symbol: int, n: int, element: str = "tb"):
    if not 0 <= symbol < n:
        raise ValueError(f"symbol {symbol} outside alphabet of size {n}")
    k, u = _tb_params(n)
    if symbol < u:
        writer.write(symbol, k, element)
    else:
        writer.write(symbol + u, k + 1, element)


def read_tb(reader: BitReader, n: int, element: str = "tb") -> int:
    k, u = _tb_params(n)
    value = reader.read(k, element)
    if value < u:
        return value
    return ((value << 1) | reader.read(1, element)) - u


# ---------------------------------------------------------------------------
# Quantization


def qstep(qp: int) -> float:
    return 2.0 ** ((qp - 4) / 6.0)


def quantize(coeffs, qp: int, offset: float = DEADZONE_OFFSET) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    levels = np.floor(np.abs(c) / qstep(qp) + offset)
    return (np.sign(c) * levels).astype(np.int64)


def dequantize(levels, qp: int) -> np.ndarray:
    return np.asarray(levels, dtype=np.float64) * qstep(qp)


# ---------------------------------------------------------------------------
# Coefficient blocks


@lru_cache(maxsize=None)
def diag_scan(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Up-right diagonal scan of an h x w block as (rows, cols) index arrays.

    Anti-diagonals are visited in order of increasing r + c; each one is walked
    from its bottom-left end to its top-right end.
    """
    rows, cols = [], []
    for d in range(h + w - 1):
        for r in range(min(d, h - 1), -1, -1):
            c = d - r
            if c < w:
                rows.append(r)
                cols.append(c)
    r = np.array(rows, dtype=np.intp)
    c = np.array(cols, dtype=np.intp)
    r.flags.writeable = False
    c.flags.writeable = False
    return r, c


def last_pos_bits(h: int, w: int) -> int:
    return max(1, (h * w - 1).bit_length())


def code_coefficients(levels: np.ndarray, writer):
    h, w = levels.shape
    rows, cols = diag_scan(h, w)
    flat = levels[rows, cols]
    nz = np.flatnonzero(flat)
    if nz.size == 0:
        writer.write(0, 1, "cbf")
        return
    writer.write(1, 1, "cbf")
    last = int(nz[-1])
    writer.write(last, last_pos_bits(h, w), "last_pos")
    for v in flat[: last + 1].tolist():
        write_se(writer, v, "coeff")


def decode_coefficients(reader: BitReader, h: int, w: int) -> np.ndarray:
    levels = np.zeros((h, w), dtype=np.int64)
    if reader.read(1, "cbf") == 0:
        return levels
    start = reader.pos
    last = reader.read(last_pos_bits(h, w), "last_pos")
    if last >= h * w:
        raise BitstreamError("last position outside block", "last_pos", start)
    rows, cols = diag_scan(h, w)
    values = [read_se(reader, "coeff") for _ in range(last + 1)]
    levels[rows[: last + 1], cols[: last + 1]] = values
    return levels


def _ue_lengths(u: np.ndarray) -> np.ndarray:
    # floor(log2(u + 1)) via frexp is exact for the magnitudes seen here
    _, e = np.frexp(u.astype(np.float64) + 1.0)
    return 2 * (e - 1) + 1


def coefficient_bits(levels: np.ndarray) -> int:
    """Bit count of code_coefficients(levels) without writing anything."""
    h, w = levels.shape
    rows, cols = diag_scan(h, w)
    flat = levels[rows, cols]
    nz = np.flatnonzero(flat)
    if nz.size == 0:
        return 1
    body = flat[: nz[-1] + 1]
    u = np.where(body > 0, 2 * body - 1, -2 * body)
    return 1 + last_pos_bits(h, w) + int(_ue_lengths(u).sum())


def coefficient_bits_batch(levels: np.ndarray) -> np.ndarray:
    """Vectorized coefficient_bits over a stack of shape (N, h, w)."""
    n, h, w = levels.shape
    rows, cols = diag_scan(h, w)
    flat = levels[:, rows, cols]
    nzmask = flat != 0
    any_nz = nzmask.any(axis=1)
    last = h * w - 1 - np.argmax(nzmask[:, ::-1], axis=1)
    u = np.where(flat > 0, 2 * flat - 1, -2 * flat)
    lengths = _ue_lengths(u)
    within = np.arange(h * w)[None, :] <= last[:, None]
    body = (lengths * within).sum(axis=1)
    return np.where(any_nz, 1 + last_pos_bits(h, w) + body, 1)
