"""Separable DCT-II primary transform and the non-separable secondary
transform bank (4 sets x 2 matrices per kernel family).

Two kernel families exist. Blocks whose smaller side is 4 use a 16x16 kernel
on the top-left 4x4 primary coefficients; larger blocks use a 16x48 kernel on
the top-left 8x8 coefficients minus their bottom-right 4x4 quadrant. Applying
a secondary matrix zeroes every primary coefficient outside that region.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .entropy import diag_scan
from .signaling import PAIR_SPECS, PairSpec

NUM_SETS = 4
SECONDARY_OUT = 16
FAMILIES = (16, 48)
BANK_MAGIC = b"LFB1"


class BankTrainingError(ValueError):
    pass


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row k is the k-th basis function."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    m.flags.writeable = False
    return m


def dct2_forward(block) -> np.ndarray:
    b = np.asarray(block, dtype=np.float64)
    h, w = b.shape[-2:]
    return dct_matrix(h) @ b @ dct_matrix(w).T


def dct2_inverse(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    h, w = c.shape[-2:]
    return dct_matrix(h).T @ c @ dct_matrix(w)


def kernel_family(h: int, w: int) -> int:
    m = min(h, w)
    if m < 4:
        raise ValueError(f"no secondary kernel for a {h}x{w} block")
    return 16 if m == 4 else 48


@lru_cache(maxsize=None)
def region_positions(family: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/col indices of the gathered low-frequency region, in scan order."""
    if family == 16:
        return diag_scan(4, 4)
    if family == 48:
        rows, cols = diag_scan(8, 8)
        keep = ~((rows >= 4) & (cols >= 4))
        r, c = rows[keep], cols[keep]
        r.flags.writeable = False
        c.flags.writeable = False
        return r, c
    raise ValueError(f"unknown kernel family {family}")


def gather_region(coeffs: np.ndarray, family: int, transpose: bool) -> np.ndarray:
    """Low-frequency region of a primary coefficient block (or a stack of them)."""
    rows, cols = region_positions(family)
    if transpose:
        rows, cols = cols, rows
    return coeffs[..., rows, cols]


def scatter_region(vec: np.ndarray, h: int, w: int, family: int, transpose: bool) -> np.ndarray:
    rows, cols = region_positions(family)
    if transpose:
        rows, cols = cols, rows
    out = np.zeros(vec.shape[:-1] + (h, w))
    out[..., rows, cols] = vec
    return out


def secondary_to_block(sec: np.ndarray) -> np.ndarray:
    """Lay 16 secondary coefficients out as a 4x4 block in diagonal scan order."""
    rows, cols = diag_scan(4, 4)
    out = np.zeros(sec.shape[:-1] + (4, 4), dtype=sec.dtype)
    out[..., rows, cols] = sec
    return out


def block_to_secondary(block: np.ndarray) -> np.ndarray:
    rows, cols = diag_scan(4, 4)
    return block[..., rows, cols]


@dataclass
class TransformBank:
    """matrices[(family, set, m)] is a 16 x family array with orthonormal rows."""

    matrices: dict = field(default_factory=dict)

    def matrix(self, family: int, set_index: int, m: int) -> np.ndarray:
        return self.matrices[(family, set_index, m)]

    def validate(self):
        expected = {(f, s, m) for f in FAMILIES for s in range(NUM_SETS) for m in (1, 2)}
        if set(self.matrices) != expected:
            raise ValueError("bank must hold 4 sets x 2 matrices x 2 families")
        for (family, _, _), mat in self.matrices.items():
            if mat.shape != (SECONDARY_OUT, family):
                raise ValueError(f"bad matrix shape {mat.shape} for family {family}")

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(BANK_MAGIC)
        buf.write(struct.pack("<H", len(self.matrices)))
        for key in sorted(self.matrices):
            family, s, m = key
            mat = np.ascontiguousarray(self.matrices[key], dtype="<f8")
            buf.write(struct.pack("<BBBHH", s, family, m, *mat.shape))
            buf.write(mat.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TransformBank":
        if data[:4] != BANK_MAGIC:
            raise ValueError("not a transform bank file")
        (count,) = struct.unpack_from("<H", data, 4)
        off = 6
        matrices = {}
        for _ in range(count):
            s, family, m, rows, cols = struct.unpack_from("<BBBHH", data, off)
            off += 7
            n = rows * cols
            mat = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(rows, cols)
            off += 8 * n
            matrices[(family, s, m)] = mat.astype(np.float64)
        bank = cls(matrices)
        bank.validate()
        return bank

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TransformBank":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def hash64(self) -> int:
        return int.from_bytes(hashlib.sha256(self.to_bytes()).digest()[:8], "little")


def secondary_forward(primary: np.ndarray, pair: PairSpec, m: int, bank: TransformBank) -> np.ndarray:
    """16 secondary coefficients of a primary coefficient block."""
    if m not in (1, 2):
        raise ValueError("secondary matrix index must be 1 or 2")
    h, w = primary.shape[-2:]
    family = kernel_family(h, w)
    region = gather_region(primary, family, pair.transpose)
    return region @ bank.matrix(family, pair.set_index, m).T


def secondary_inverse(sec: np.ndarray, h: int, w: int, pair: PairSpec, m: int,
                      bank: TransformBank) -> np.ndarray:
    """Primary coefficient block rebuilt from 16 secondary coefficients.

    Everything outside the low-frequency region comes back as zero.
    """
    family = kernel_family(h, w)
    region = sec @ bank.matrix(family, pair.set_index, m)
    return scatter_region(region, h, w, family, pair.transpose)


# ---------------------------------------------------------------------------
# Bank training


def _sorted_eigh(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order].T.copy()
    # deterministic sign: largest-magnitude component positive
    idx = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(len(vecs)), idx])
    signs[signs == 0] = 1.0
    return vals, vecs * signs[:, None]


def klt(samples: np.ndarray, keep: int = SECONDARY_OUT) -> tuple[np.ndarray, np.ndarray]:
    """Top `keep` eigenvectors (rows) and all eigenvalues of the sample
    second-moment matrix, in descending eigenvalue order."""
    x = np.asarray(samples, dtype=np.float64)
    cov = x.T @ x / len(x)
    vals, vecs = _sorted_eigh(cov)
    return vecs[:keep], vals


def _split_keep(family: int) -> int:
    # a 16-input kernel is a full basis, so split on partial reconstruction
    return SECONDARY_OUT if family > SECONDARY_OUT else SECONDARY_OUT // 2


def reconstruction_error(samples: np.ndarray, mat: np.ndarray, keep: int) -> np.ndarray:
    coef = samples @ mat[:keep].T
    return np.sum(samples**2, axis=1) - np.sum(coef**2, axis=1)


def train_pair(samples: np.ndarray, family: int) -> tuple[np.ndarray, np.ndarray]:
    """Two specialised KLTs for one transform set.

    Matrix 1 is the KLT of all samples; matrix 2 the KLT of the samples that
    matrix 1 reconstructs worst (above the median error). One reassignment pass
    then refits both on the samples each reconstructs better.
    """
    keep = _split_keep(family)
    min_cluster = 2 * family
    m1, _ = klt(samples)
    err1 = reconstruction_error(samples, m1, keep)
    hard = err1 > np.median(err1)
    if hard.sum() < min_cluster:
        hard = err1 >= np.median(err1)
    m2, _ = klt(samples[hard]) if hard.sum() >= min_cluster else (m1.copy(), None)

    err2 = reconstruction_error(samples, m2, keep)
    to_second = err2 < err1
    n2 = int(to_second.sum())
    if min_cluster <= n2 <= len(samples) - min_cluster:
        m1, _ = klt(samples[~to_second])
        m2, _ = klt(samples[to_second])
    return m1, m2


def train_bank(samples: dict, min_per_dim: int = 10) -> TransformBank:
    """Train a bank from samples[(family, set)] = array (N, family).

    Samples from transposed mode groups must already be gathered transposed.
    """
    starving = []
    for family in FAMILIES:
        for s in range(NUM_SETS):
            n = len(samples.get((family, s), ()))
            if n < min_per_dim * family:
                starving.append(f"set {s} family {family}: {n} < {min_per_dim * family}")
    if starving:
        raise BankTrainingError("insufficient samples: " + "; ".join(starving))
    matrices = {}
    for family in FAMILIES:
        for s in range(NUM_SETS):
            m1, m2 = train_pair(np.asarray(samples[(family, s)], dtype=np.float64), family)
            matrices[(family, s, 1)] = m1
            matrices[(family, s, 2)] = m2
    bank = TransformBank(matrices)
    bank.validate()
    return bank


def group_samples(primary: np.ndarray, pair_idx: int) -> tuple[int, np.ndarray]:
    """(set, gathered region) of a primary block predicted by a mode whose
    implicit pair is pair_idx."""
    spec = PAIR_SPECS[pair_idx]
    h, w = primary.shape[-2:]
    return spec.set_index, gather_region(primary, kernel_family(h, w), spec.transpose)


def random_bank(seed: int = 0) -> TransformBank:
    """Bank of random matrices with orthonormal rows (QR of Gaussian draws)."""
    rng = np.random.default_rng(seed)
    matrices = {}
    for family in FAMILIES:
        for s in range(NUM_SETS):
            for m in (1, 2):
                q, r = np.linalg.qr(rng.standard_normal((family, SECONDARY_OUT)))
                q = q * np.sign(np.diag(r))
                matrices[(family, s, m)] = q.T.copy()
    return TransformBank(matrices)
