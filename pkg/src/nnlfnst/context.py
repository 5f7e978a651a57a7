"""L-shaped decoded context around a block: extraction, geometry adaptation
to the eight trained network sizes, and the pre/post-processing pair.

A context is stored as its bounding canvas of shape (n_a + h, n_l + w); the
bottom-right h x w corner is the block itself and is never read. The above
portion is canvas[:n_a] and the left portion is canvas[n_a:, :n_l].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# (h, w) of the trained networks; h <= w throughout
NETWORK_SIZES = ((4, 4), (4, 8), (4, 16), (4, 32), (8, 8), (8, 16), (16, 16), (32, 32))
BLOCK_SIDES = (4, 8, 16, 32, 64)


@dataclass(frozen=True)
class ContextSpec:
    n_a: int
    n_l: int
    h: int
    w: int

    @classmethod
    def for_block(cls, h: int, w: int) -> "ContextSpec":
        m = min(h, w)
        if m <= 8:
            return cls(m, m, h, w)
        return cls(h // 2, w // 2, h, w)

    @property
    def canvas_shape(self) -> tuple[int, int]:
        return self.n_a + self.h, self.n_l + self.w


@dataclass
class Context:
    spec: ContextSpec
    canvas: np.ndarray          # float64 sample values, block corner unused
    available: np.ndarray       # bool, availability before filling

    @property
    def above(self) -> np.ndarray:
        return self.canvas[: self.spec.n_a]

    @property
    def left(self) -> np.ndarray:
        return self.canvas[self.spec.n_a:, : self.spec.n_l]

    def lshape_mask(self) -> np.ndarray:
        mask = np.ones(self.canvas.shape, dtype=bool)
        mask[self.spec.n_a:, self.spec.n_l:] = False
        return mask

    def samples(self) -> np.ndarray:
        """All L-shape samples, above portion first, row-major."""
        return np.concatenate([self.above.ravel(), self.left.ravel()])


@dataclass(frozen=True)
class GeometryAdaptation:
    transpose: bool
    down_h: int
    down_w: int
    net: tuple[int, int]

    @property
    def is_identity(self) -> bool:
        return not self.transpose and self.down_h == 1 and self.down_w == 1


_DOWNSAMPLED = {(16, 32): (1, 2, (16, 16)), (64, 64): (2, 2, (32, 32))}


def resolve_geometry(h: int, w: int) -> GeometryAdaptation | None:
    """How a block of height h and width w reaches a trained network, or None."""
    if (h, w) in NETWORK_SIZES:
        return GeometryAdaptation(False, 1, 1, (h, w))
    if (w, h) in NETWORK_SIZES:
        return GeometryAdaptation(True, 1, 1, (w, h))
    for transpose, (th, tw) in ((False, (h, w)), (True, (w, h))):
        if (th, tw) in _DOWNSAMPLED:
            dh, dw, net = _DOWNSAMPLED[(th, tw)]
            return GeometryAdaptation(transpose, dh, dw, net)
    return None


def extract_context(recon: np.ndarray, pos: tuple[int, int], spec: ContextSpec,
                    bitdepth: int = 8, decoded: np.ndarray | None = None) -> Context:
    """Copy the L-shape around the block at pos=(y, x) from a reconstruction.

    Samples outside the picture (or not yet decoded when a decoded mask is
    given) are replaced by the nearest available L-shape sample; with nothing
    available the whole context is mid-gray.
    """
    y, x = pos
    H, W = recon.shape
    ch, cw = spec.canvas_shape
    y0, x0 = y - spec.n_a, x - spec.n_l
    canvas = np.zeros((ch, cw), dtype=np.float64)
    avail = np.zeros((ch, cw), dtype=bool)
    ys, ye = max(y0, 0), min(y0 + ch, H)
    xs, xe = max(x0, 0), min(x0 + cw, W)
    if ys < ye and xs < xe:
        canvas[ys - y0:ye - y0, xs - x0:xe - x0] = recon[ys:ye, xs:xe]
        if decoded is None:
            avail[ys - y0:ye - y0, xs - x0:xe - x0] = True
        else:
            avail[ys - y0:ye - y0, xs - x0:xe - x0] = decoded[ys:ye, xs:xe]
    avail[spec.n_a:, spec.n_l:] = False

    lshape = np.ones((ch, cw), dtype=bool)
    lshape[spec.n_a:, spec.n_l:] = False
    if not avail.any():
        canvas[:] = float(1 << (bitdepth - 1))
    elif not avail[lshape].all():
        _, (iy, ix) = ndimage.distance_transform_edt(~avail, return_indices=True)
        canvas = canvas[iy, ix]
    canvas[~lshape] = 0.0
    return Context(spec, canvas, avail)


def _downsample(a: np.ndarray, axis: int) -> np.ndarray:
    if axis == 0:
        return 0.5 * (a[0::2] + a[1::2])
    return 0.5 * (a[:, 0::2] + a[:, 1::2])


def adapt_context(ctx: Context, geo: GeometryAdaptation) -> Context:
    """Context as seen by the network: transposed, then downsampled."""
    canvas, avail, s = ctx.canvas, ctx.available, ctx.spec
    if geo.transpose:
        canvas, avail = canvas.T, avail.T
        s = ContextSpec(s.n_l, s.n_a, s.w, s.h)
    if geo.down_h == 2:
        canvas = _downsample(canvas, 0)
        avail = avail[0::2] & avail[1::2]
        s = ContextSpec(s.n_a // 2, s.n_l, s.h // 2, s.w)
    if geo.down_w == 2:
        canvas = _downsample(canvas, 1)
        avail = avail[:, 0::2] & avail[:, 1::2]
        s = ContextSpec(s.n_a, s.n_l // 2, s.h, s.w // 2)
    if s != ContextSpec.for_block(*geo.net):
        raise AssertionError(f"adapted context {s} does not fit network {geo.net}")
    return Context(s, np.ascontiguousarray(canvas), np.ascontiguousarray(avail))


@dataclass
class PreprocessedContext:
    above: np.ndarray
    left: np.ndarray
    mu: float


def preprocess(ctx: Context, bitdepth: int = 8) -> PreprocessedContext:
    mu = float(ctx.samples().mean())
    scale = float(1 << (bitdepth - 1))
    return PreprocessedContext((ctx.above - mu) / scale, (ctx.left - mu) / scale, mu)


def _upsample2(a: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation by 2 along axis, edge samples replicated.

    Low-res sample i sits at high-res position 2i + 0.5, matching the 2-tap
    averaging used for downsampling.
    """
    n = a.shape[axis]
    pos = (np.arange(2 * n) - 0.5) / 2.0
    i0 = np.clip(np.floor(pos).astype(int), 0, n - 1)
    i1 = np.clip(i0 + 1, 0, n - 1)
    frac = np.clip(pos - np.floor(pos), 0.0, 1.0)
    frac = np.where(pos < 0, 0.0, frac)
    frac = np.where(np.floor(pos) >= n - 1, 0.0, frac)
    a0 = np.take(a, i0, axis=axis)
    a1 = np.take(a, i1, axis=axis)
    shape = [1, 1]
    shape[axis] = 2 * n
    frac = frac.reshape(shape)
    return a0 * (1.0 - frac) + a1 * frac


def denormalize(y_c: np.ndarray, mu: float, bitdepth: int = 8) -> np.ndarray:
    y = y_c * float(1 << (bitdepth - 1)) + mu
    return np.clip(y, 0.0, float((1 << bitdepth) - 1))


def postprocess(y_c, mu: float, bitdepth: int, geo: GeometryAdaptation) -> np.ndarray:
    """Integer prediction block in the original orientation and size."""
    nh, nw = geo.net
    y = denormalize(np.asarray(y_c, dtype=np.float64).reshape(nh, nw), mu, bitdepth)
    if geo.down_w == 2:
        y = _upsample2(y, 1)
    if geo.down_h == 2:
        y = _upsample2(y, 0)
    if geo.transpose:
        y = y.T
    return np.rint(y).astype(np.int64)
