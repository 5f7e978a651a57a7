"""The single neural-network intra prediction mode."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .context import (ContextSpec, GeometryAdaptation, adapt_context, extract_context,
                      postprocess, preprocess, resolve_geometry)
from .nn import Model, forward, models_hash


@dataclass
class NnModeOutput:
    prediction: np.ndarray      # (h, w) int64 samples
    logits: np.ndarray          # (14,)
    geometry: GeometryAdaptation


class ModelSet:
    """Networks keyed by their (h, w); weights are held at storage precision
    so that a decoder loading the saved files sees identical parameters."""

    def __init__(self, models=()):
        self.models: dict = {}
        for m in models:
            self.models[tuple(m.block_size)] = m.copy().round_to_storage()
        self._hash = models_hash(list(self.models.values()))

    def __contains__(self, size) -> bool:
        return tuple(size) in self.models

    def __getitem__(self, size) -> Model:
        return self.models[tuple(size)]

    def __len__(self) -> int:
        return len(self.models)

    def hash64(self) -> int:
        return self._hash

    def geometry_for(self, h: int, w: int) -> GeometryAdaptation | None:
        geo = resolve_geometry(h, w)
        if geo is None or geo.net not in self.models:
            return None
        return geo

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for (h, w), m in sorted(self.models.items()):
            m.save(d / f"f_{h}x{w}.nnw")

    @classmethod
    def load(cls, directory) -> "ModelSet":
        return cls(Model.load(p) for p in sorted(Path(directory).glob("f_*.nnw")))


def predict_nn(recon: np.ndarray, pos: tuple[int, int], h: int, w: int, models: ModelSet,
               bitdepth: int = 8, decoded: np.ndarray | None = None) -> NnModeOutput | None:
    """Network prediction and logits for the block at pos, or None when no
    trained network covers this block size."""
    geo = models.geometry_for(h, w)
    if geo is None:
        return None
    ctx = extract_context(recon, pos, ContextSpec.for_block(h, w), bitdepth, decoded)
    pre = preprocess(adapt_context(ctx, geo), bitdepth)
    model = models[geo.net]
    y_c, logits, _ = forward(model, model.make_inputs(pre.above[None], pre.left[None]))
    block = postprocess(y_c[0], pre.mu, bitdepth, geo)
    return NnModeOutput(block, logits[0], geo)
