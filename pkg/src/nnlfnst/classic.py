"""Classical intra prediction: planar, DC and angular modes with wide-angle
substitution for rectangular blocks.

References are the last row of the above context and the last column of the
left context; positions past the block edge replicate the nearest reference.
Angular interpolation is 2-tap at 1/32-sample precision, in integer
arithmetic.
"""

from __future__ import annotations

import numpy as np

from .context import Context

PLANAR = 0
DC = 1
NUM_MODES = 67
REDUCED_MODES = (0, 1, 2, 10, 18, 26, 34, 42, 50, 58, 66)

# intraPredAngle for effective modes -14..80 (mode 0 and 1 unused)
_ANGLES_NEG = [512, 341, 256, 171, 128, 102, 86, 73, 64, 57, 51, 45, 39, 35]
_ANGLES_2_34 = [32, 29, 26, 23, 20, 18, 16, 14, 12, 10, 8, 6, 4, 3, 2, 1, 0,
                -1, -2, -3, -4, -6, -8, -10, -12, -14, -16, -18, -20, -23, -26, -29, -32]
_ANGLES_35_66 = _ANGLES_2_34[::-1][1:]
_ANGLES_67_80 = _ANGLES_NEG[::-1]

ANGLE = {}
for _i, _a in enumerate(_ANGLES_NEG):
    ANGLE[-14 + _i] = _a
for _i, _a in enumerate(_ANGLES_2_34):
    ANGLE[2 + _i] = _a
for _i, _a in enumerate(_ANGLES_35_66):
    ANGLE[35 + _i] = _a
for _i, _a in enumerate(_ANGLES_67_80):
    ANGLE[67 + _i] = _a


def _log2(n: int) -> int:
    return n.bit_length() - 1


def wide_angle_remap(mode: int, h: int, w: int) -> int:
    """Effective mode index after wide-angle substitution."""
    if not 0 <= mode < NUM_MODES:
        raise ValueError(f"intra mode {mode} out of range")
    if w == h or mode < 2:
        return mode
    ratio = abs(_log2(w) - _log2(h))
    if w > h and mode < (8 + 2 * ratio if ratio > 1 else 8):
        return mode + 65
    if h > w and mode > (60 - 2 * ratio if ratio > 1 else 60):
        return mode - 67
    return mode


def _references(ctx: Context, h: int, w: int):
    above, left = ctx.above, ctx.left
    n_l = ctx.spec.n_l
    top = np.rint(above[-1, n_l:n_l + w]).astype(np.int64)
    side = np.rint(left[:h, -1]).astype(np.int64)
    corner = int(np.rint(above[-1, n_l - 1]))
    return top, side, corner


def _angular(main: np.ndarray, side: np.ndarray, corner: int, angle: int, h: int, w: int) -> np.ndarray:
    """Vertical-class angular prediction of an h x w block.

    main holds the references along the block's top edge, side those along
    its left edge; horizontal-class modes call this on the transposed problem.
    """
    reach = max(0, (h * angle) >> 5) + w + 2
    off = h + 1
    ref = np.empty(off + reach + 1, dtype=np.int64)
    ref[off] = corner
    n = min(len(main), reach)
    ref[off + 1:off + 1 + n] = main[:n]
    ref[off + 1 + n:] = main[n - 1]
    ref[:off] = corner
    if angle < 0:
        inv = int(round(512 * 32 / angle))
        lo = (h * angle) >> 5
        for k in range(-1, lo - 1, -1):
            j = -1 + ((k * inv + 256) >> 9)
            ref[off + k] = side[min(max(j, 0), len(side) - 1)]
    yy = np.arange(1, h + 1)[:, None] * angle
    idx = yy >> 5
    frac = yy & 31
    xs = np.arange(w)[None, :]
    a = ref[off + xs + idx + 1]
    b = ref[off + xs + idx + 2]
    return ((32 - frac) * a + frac * b + 16) >> 5


def predict_classic(ctx: Context, mode: int, h: int, w: int) -> np.ndarray:
    """Integer h x w prediction from the context references."""
    top, side, corner = _references(ctx, h, w)
    if mode == PLANAR:
        lw, lh = _log2(w), _log2(h)
        y = np.arange(h)[:, None]
        x = np.arange(w)[None, :]
        bottom_left = int(side[-1])
        top_right = int(top[-1])
        pv = ((h - 1 - y) * top[None, :] + (y + 1) * bottom_left) << lw
        ph = ((w - 1 - x) * side[:, None] + (x + 1) * top_right) << lh
        return (pv + ph + w * h) >> (lw + lh + 1)
    if mode == DC:
        if w == h:
            dc = (int(top.sum()) + int(side.sum()) + w) >> (_log2(w) + 1)
        elif w > h:
            dc = (int(top.sum()) + (w >> 1)) >> _log2(w)
        else:
            dc = (int(side.sum()) + (h >> 1)) >> _log2(h)
        return np.full((h, w), dc, dtype=np.int64)
    eff = wide_angle_remap(mode, h, w)
    angle = ANGLE[eff]
    if eff >= 34:
        return _angular(top, side, corner, angle, h, w)
    return _angular(side, top, corner, angle, w, h).T
