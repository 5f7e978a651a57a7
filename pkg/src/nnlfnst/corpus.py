"""Image I/O (binary PGM, raw 8-bit) and the local training/test corpus."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# skimage.data samples; HELD_OUT_NAMES stay out of training
NATURAL_NAMES = ("camera", "astronaut", "coffee", "chelsea", "coins", "moon", "page",
                 "hubble_deep_field", "immunohistochemistry", "rocket", "text", "grass",
                 "gravel", "brick", "cell", "retina", "clock", "horse", "logo")
HELD_OUT_NAMES = ("astronaut", "coffee")


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: only binary PGM (P5) is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = np.uint8 if maxval < 256 else ">u2"
    return np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.int64)


def write_pgm(path, plane: np.ndarray, bitdepth: int = 8):
    h, w = plane.shape
    maxval = (1 << bitdepth) - 1
    dtype = np.uint8 if maxval < 256 else ">u2"
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        f.write(np.asarray(plane).astype(dtype).tobytes())


def read_raw(path, width: int, height: int) -> np.ndarray:
    data = np.fromfile(path, dtype=np.uint8, count=width * height)
    return data.reshape(height, width).astype(np.int64)


def read_image(path, width: int | None = None, height: int | None = None) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    if path.suffix.lower() in (".raw", ".y", ".yuv"):
        if width is None or height is None:
            raise ValueError("raw input needs --width and --height")
        return read_raw(path, width, height)
    from PIL import Image
    with Image.open(path) as im:
        return to_luma(np.asarray(im))


def to_luma(img: np.ndarray) -> np.ndarray:
    """8-bit luma (BT.601 weights) of a grey, RGB or RGBA array."""
    a = np.asarray(img)
    if a.dtype != np.uint8:
        a = a.astype(np.float64)
        a = np.rint(255.0 * (a - a.min()) / max(a.max() - a.min(), 1e-12))
    a = a.astype(np.float64)
    if a.ndim == 3:
        a = a[..., 0] * 0.299 + a[..., 1] * 0.587 + a[..., 2] * 0.114
    return np.clip(np.rint(a), 0, 255).astype(np.int64)


def natural_image(name: str) -> np.ndarray:
    from skimage import data
    return to_luma(getattr(data, name)())


def natural_images(names=NATURAL_NAMES) -> dict:
    return {n: natural_image(n) for n in names}


def synthetic_image(kind: str, height: int, width: int, seed: int = 0) -> np.ndarray:
    """Deterministic synthetic 8-bit test content."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    if kind == "gradient":
        a = 255.0 * (0.6 * xx / max(width - 1, 1) + 0.4 * yy / max(height - 1, 1))
    elif kind == "stripes":
        theta = rng.uniform(0, np.pi)
        f = rng.uniform(0.05, 0.3)
        a = 128 + 100 * np.sin(f * (np.cos(theta) * xx + np.sin(theta) * yy))
    elif kind == "checker":
        s = int(rng.integers(3, 12))
        a = 60.0 + 140.0 * (((yy // s) + (xx // s)) % 2)
    elif kind == "shapes":
        a = np.full((height, width), 90.0)
        for _ in range(6):
            cy, cx = rng.uniform(0, height), rng.uniform(0, width)
            r = rng.uniform(4, max(height, width) / 3)
            a[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] = rng.uniform(0, 255)
    elif kind == "noise":
        a = 128 + 40 * rng.standard_normal((height, width))
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return np.clip(np.rint(a), 0, 255).astype(np.int64)


SYNTHETIC_KINDS = ("gradient", "stripes", "checker", "shapes", "noise")


def mixed_corpus(count: int, height: int, width: int, seed: int = 0) -> list:
    """count images: natural crops and synthetic content, alternating."""
    rng = np.random.default_rng(seed)
    out = []
    names = [n for n in NATURAL_NAMES if n not in HELD_OUT_NAMES]
    for i in range(count):
        if i % 2 == 0:
            img = natural_image(names[(i // 2) % len(names)])
            y = int(rng.integers(0, img.shape[0] - height + 1))
            x = int(rng.integers(0, img.shape[1] - width + 1))
            out.append(img[y:y + height, x:x + width].copy())
        else:
            kind = SYNTHETIC_KINDS[(i // 2) % len(SYNTHETIC_KINDS)]
            out.append(synthetic_image(kind, height, width, seed + i))
    return out


def load_directory(directory) -> dict:
    d = Path(directory)
    return {p.stem: read_image(p) for p in sorted(d.iterdir())
            if p.suffix.lower() in (".pgm", ".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")}
