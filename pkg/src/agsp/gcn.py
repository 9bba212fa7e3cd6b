"""Multi-scale graph convolution: ``relu(sum_k A~^k H W_k)`` per layer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .graphs import GraphOperators
from .numeric import Rng


@dataclass
class GcnLayerParams:
    weights: list  # W_0..W_Kg, each (d_in, d_out)
    dropout: float = 0.0

    def __post_init__(self):
        shapes = {tuple(ad.value(w).shape) for w in self.weights}
        if len(shapes) != 1:
            raise ShapeError(f"hop weights within a layer must share shape, got {sorted(shapes)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def hops(self) -> int:
        return len(self.weights) - 1

    @property
    def dims(self) -> tuple[int, int]:
        return tuple(ad.value(self.weights[0]).shape)


@dataclass
class GcnStack:
    layers: list[GcnLayerParams] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.dims[1] != b.dims[0]:
                raise ShapeError(f"layer dims do not chain: {a.dims} -> {b.dims}")


def dropout_mask(shape, rate: float, rng: Rng) -> np.ndarray:
    """Inverted-dropout mask: kept entries scaled by ``1 / (1 - rate)``."""
    keep = rng.uniform(shape) >= rate
    return keep / (1.0 - rate)


def gcn_layer(H, ops: GraphOperators, params: GcnLayerParams, training: bool = False,
              rng: Rng | None = None):
    H = ad.as_tensor(H)
    d_in, _ = params.dims
    if H.ndim != 2 or H.shape[1] != d_in:
        raise ShapeError(f"layer expects (n, {d_in}) input, got {H.shape}")
    if H.shape[0] != ops.n:
        raise ShapeError("feature rows do not match graph nodes")
    P = H
    agg = P @ params.weights[0]
    for W in params.weights[1:]:
        P = ops.norm_adj @ P
        agg = agg + P @ W
    if training and params.dropout > 0:
        if rng is None:
            raise ValueError("training with dropout needs an rng")
        agg = agg * dropout_mask(agg.shape, params.dropout, rng)
    return ad.relu(agg)


def gcn_forward(H0, ops: GraphOperators, stack: GcnStack, training: bool = False,
                rng: Rng | None = None):
    H = ad.as_tensor(H0)
    for layer in stack.layers:
        H = gcn_layer(H, ops, layer, training, rng)
    return H


def concat_intra_inter(H_intra, H_inter):
    a, b = ad.as_tensor(H_intra), ad.as_tensor(H_inter)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    return ad.concat([a, b], axis=1)
