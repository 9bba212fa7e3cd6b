"""Semantic-anchor attention over modalities, convex fusion and sigmoid gating.

Per-modality embeddings are passed as ``(n, d_h)`` blocks with a boolean
presence mask of shape ``(n, M)``; absent rows are ignored (their logits are
masked out of the softmax).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ModeError, PreconditionError, ShapeError


@dataclass
class FusionParams:
    W_a: object  # (d_h, d_s)
    W_s: object  # (d_s, d_h)
    W_g: object  # (d_h, d_h)
    b_g: object  # (d_h,)


def _check_mask(mask, n: int, M: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n, M):
        raise ShapeError(f"mask must be ({n}, {M}), got {mask.shape}")
    if not mask.any(axis=1).all():
        raise PreconditionError("every instance needs at least one present modality")
    return mask


def anchors(H: Sequence, mask, mode: str, *, W_s=None, labels=None, class_table=None):
    """Semantic anchors ``s_i``: class-table rows, or ``W_s`` times the modality mean."""
    n = ad.value(H[0]).shape[0]
    if mode == "label_embedding":
        if labels is None:
            raise ModeError("label_embedding anchors need labels (training only)")
        labels = np.asarray(labels)
        table = ad.as_tensor(class_table)
        if labels.ndim == 1:
            sel = np.zeros((n, table.shape[0]))
            sel[np.arange(n), labels.astype(np.intp)] = 1.0
        else:
            sel = labels / labels.sum(axis=1, keepdims=True)
        return ad.as_tensor(sel) @ table
    if mode == "centroid":
        mask = _check_mask(mask, n, len(H))
        total = None
        for m, h in enumerate(H):
            term = ad.as_tensor(h) * mask[:, m:m + 1].astype(np.float64)
            total = term if total is None else total + term
        mean = total * (1.0 / mask.sum(axis=1))[:, None]
        return mean @ ad.as_tensor(W_s).T
    raise ModeError(f"unknown anchor mode {mode!r}")


def attention_logits(H: Sequence, S, W_a, scale: float = 1.0):
    """``(n, M)`` logits ``scale * h_i^(m)T W_a s_i``."""
    proj = ad.as_tensor(S) @ ad.as_tensor(W_a).T  # row i = W_a s_i
    if scale != 1.0:
        proj = proj * scale
    cols = [ad.reshape(ad.sum_(ad.as_tensor(h) * proj, axis=1), (-1, 1)) for h in H]
    return ad.concat(cols, axis=1)


def attention_weights(H: Sequence, S, W_a, mask, scale: float = 1.0):
    """Softmax of the logits over present modalities; absent entries are exactly 0."""
    logits = attention_logits(H, S, W_a, scale)
    mask = _check_mask(mask, logits.shape[0], logits.shape[1])
    return ad.masked_softmax(logits, mask, axis=1)


def softmax_from_logits(logits, mask) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    mask = _check_mask(mask, *logits.shape)
    return ad.masked_softmax(logits, mask, axis=1).value


def fuse(alpha, H: Sequence):
    """``z_i = sum_m alpha_i^(m) h_i^(m)``."""
    alpha = ad.as_tensor(alpha)
    if alpha.shape[1] != len(H):
        raise ShapeError("alpha columns must match number of modalities")
    z = None
    for m, h in enumerate(H):
        term = ad.as_tensor(h) * ad.take_rows(alpha.T, [m]).T
        z = term if z is None else z + term
    return z


def gate(z, W_g, b_g):
    """``sigmoid(W_g z + b_g) * z`` row-wise."""
    z = ad.as_tensor(z)
    W_g = ad.as_tensor(W_g)
    if W_g.shape != (z.shape[-1], z.shape[-1]):
        raise ShapeError(f"gate matrix must be {(z.shape[-1],) * 2}, got {W_g.shape}")
    g = ad.sigmoid(z @ W_g.T + b_g)
    return g * z
