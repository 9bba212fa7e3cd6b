"""Dual-graph construction over batch instances and normalized operators.

Two graphs per batch:

* an intra-modal graph per modality, gating clamped cosine similarity by a
  squared-distance threshold ``epsilon``;
* one inter-modal semantic graph using a Gaussian kernel of bandwidth
  ``sigma`` over semantic embeddings.

All builders accept numpy arrays or :class:`~agsp.autodiff.Tensor` values and
stay differentiable with respect to the node features (the threshold mask and
the percentile/median heuristics' *ordering* are treated as constants).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ModeError, ShapeError
from .numeric import EigenDecomposition, sym_eig

NORM_FLOOR = 1e-12
EPSILON_PERCENTILE = 25.0


@dataclass
class Graph:
    A: ad.Tensor
    kind: str  # "intra" | "inter"
    modality: str | None = None
    nodes: np.ndarray | None = None  # batch row index of each graph node
    param: float | None = None  # epsilon or sigma actually used

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return self.A.value

    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.adjacency, 1)))

    def density(self) -> float:
        pairs = self.n * (self.n - 1) // 2
        return self.edge_count() / pairs if pairs else 0.0


@dataclass
class GraphOperators:
    degree: ad.Tensor
    norm_adj: ad.Tensor
    laplacian: ad.Tensor
    eig: EigenDecomposition | None = field(default=None)

    @property
    def n(self) -> int:
        return self.degree.shape[0]


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeError(f"length mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < NORM_FLOOR or nv < NORM_FLOOR:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def _sq_dists(X: ad.Tensor) -> ad.Tensor:
    sq = ad.sum_(X * X, axis=1)
    n = X.shape[0]
    d2 = ad.reshape(sq, (n, 1)) + ad.reshape(sq, (1, n)) - 2.0 * (X @ X.T)
    return ad.clip(d2, lo=0.0)


def exact_sq_dists(X) -> np.ndarray:
    """``||x_i - x_j||^2`` by direct differencing (numpy, no tape).

    Unlike the Gram-matrix expansion this is exactly symmetric and exactly
    invariant under row permutation, so threshold decisions do not depend
    on the order of the batch.
    """
    X = np.asarray(ad.value(X), dtype=np.float64)
    n, d = X.shape
    out = np.zeros((n, n))
    for k in range(d):  # fixed accumulation order over features
        diff = X[:, k, None] - X[None, :, k]
        out += diff * diff
    return out


def _offdiag(n: int) -> np.ndarray:
    return 1.0 - np.eye(n)


def pairwise_distances(X) -> np.ndarray:
    """Upper-triangle Euclidean distances (row-major pair order), numpy only."""
    X = ad.value(X)
    d2 = exact_sq_dists(X)
    iu = np.triu_indices(X.shape[0], 1)
    return np.sqrt(d2[iu])


def default_epsilon(X) -> float | None:
    """Squared 25th-percentile pairwise distance; ``None`` for fewer than 2 rows."""
    d = pairwise_distances(X)
    if d.size == 0:
        return None
    return float(np.percentile(d, EPSILON_PERCENTILE)) ** 2


def build_intra_graph(X, epsilon: float | None = None, modality: str | None = None,
                      nodes: Sequence[int] | None = None) -> Graph:
    """``A_ij = max(0, cos(x_i, x_j)) * [||x_i - x_j||^2 < epsilon]``, zero diagonal.

    ``epsilon=None`` selects the per-batch default (see :func:`default_epsilon`).
    """
    X = ad.as_tensor(X)
    if X.ndim != 2:
        raise ShapeError("expected an (n, d) feature matrix")
    n = X.shape[0]
    if epsilon is not None and not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    nodes_arr = np.arange(n) if nodes is None else np.asarray(nodes, dtype=np.intp)
    if n == 0:
        return Graph(ad.Tensor(np.zeros((0, 0))), "intra", modality, nodes_arr, epsilon)
    if epsilon is None:
        epsilon = default_epsilon(X)
    if epsilon is None:  # single node
        gate = np.zeros((n, n))
    else:
        gate = (exact_sq_dists(X) < epsilon) * _offdiag(n)
    norms = np.sqrt(np.sum(X.value * X.value, axis=1))
    keep = (norms >= NORM_FLOOR).astype(np.float64)
    inv = ad.rsqrt_pos(ad.sum_(X * X, axis=1)) * keep
    Nrm = X * ad.reshape(inv, (n, 1))
    cos = ad.clip(Nrm @ Nrm.T, lo=0.0, hi=1.0)
    A = cos * gate
    return Graph(A, "intra", modality, nodes_arr, epsilon)


def median_bandwidth(E) -> ad.Tensor:
    """Median pairwise distance of the rows of ``E`` (differentiable).

    Falls back to a constant 1.0 when fewer than two rows exist or the median
    is zero.
    """
    E = ad.as_tensor(E)
    n = E.shape[0]
    if n < 2:
        return ad.Tensor(1.0)
    d2 = _sq_dists(E)
    iu = np.triu_indices(n, 1)
    flat = iu[0] * n + iu[1]
    vals = d2.value.reshape(-1)[flat]
    order = np.argsort(vals, kind="stable")
    m = vals.size
    picks = [order[m // 2]] if m % 2 else [order[m // 2 - 1], order[m // 2]]
    if any(vals[p] <= 0.0 for p in picks):
        return ad.Tensor(1.0)
    sel = ad.sqrt(ad.take_flat(d2, flat[picks]))
    return ad.mean(sel)


def build_inter_graph(E, sigma=None, nodes: Sequence[int] | None = None) -> Graph:
    """``A_ij = exp(-||e_i - e_j||^2 / sigma^2)`` for ``i != j``.

    ``sigma=None`` uses the median pairwise distance of the embeddings.
    """
    E = ad.as_tensor(E)
    n = E.shape[0]
    if sigma is None:
        sigma = median_bandwidth(E)
    elif not ad.value(sigma) > 0:
        raise ConfigError(f"sigma must be > 0, got {ad.value(sigma)}")
    nodes_arr = np.arange(n) if nodes is None else np.asarray(nodes, dtype=np.intp)
    if n == 0:
        return Graph(ad.Tensor(np.zeros((0, 0))), "inter", None, nodes_arr, float(ad.value(sigma)))
    sig = ad.as_tensor(sigma)
    d2 = _sq_dists(E)
    A = ad.exp(-d2 / (sig * sig)) * _offdiag(n)
    return Graph(A, "inter", None, nodes_arr, float(sig.value))


def restrict(g: Graph, rows: np.ndarray, modality: str | None = None) -> Graph:
    """Induced subgraph on graph-node positions ``rows`` (used per modality)."""
    rows = np.asarray(rows, dtype=np.intp)
    n = g.n
    sub = ad.take_rows(g.A, rows)
    sub = ad.take_rows(sub.T, rows).T
    nodes = g.nodes[rows] if g.nodes is not None else rows
    return Graph(sub, g.kind, modality, nodes, g.param)


def semantic_embeddings(n: int, mode: str, *, labels=None, class_table=None,
                        projected: dict | None = None) -> ad.Tensor:
    """Per-instance embedding rows for the semantic graph.

    ``mode="labels"``: row of ``class_table`` for the instance label (mean of
    rows for a multilabel set, given as a multi-hot ``(n, C)`` array).
    ``mode="centroid"``: mean over present modalities of the projected rows;
    ``projected`` maps modality -> ``(rows Tensor, batch indices)``.
    """
    if mode == "labels":
        if labels is None:
            raise ModeError("labels mode needs labels (not available at inference)")
        if class_table is None:
            raise ModeError("labels mode needs a class table")
        table = ad.as_tensor(class_table)
        labels = np.asarray(labels)
        C = table.shape[0]
        if labels.ndim == 1:
            onehot = np.zeros((n, C))
            onehot[np.arange(n), labels.astype(np.intp)] = 1.0
        else:
            onehot = labels / labels.sum(axis=1, keepdims=True)
        return ad.as_tensor(onehot) @ table
    if mode == "centroid":
        if not projected:
            raise ModeError("centroid mode needs projected modality features")
        total = None
        count = np.zeros(n)
        for rows, idx in projected.values():
            full = ad.scatter_rows(rows, idx, n)
            total = full if total is None else total + full
            count[np.asarray(idx, dtype=np.intp)] += 1
        if np.any(count == 0):
            raise ShapeError("every instance needs at least one present modality")
        return total * (1.0 / count)[:, None]
    raise ModeError(f"unknown semantic mode {mode!r}")


def graph_operators(g: Graph, with_eig: bool = False, self_loops: bool = False) -> GraphOperators:
    """Degree, ``D^-1/2 A D^-1/2`` and ``L = I - D^-1/2 A D^-1/2``.

    Isolated nodes get a zero row in the normalized adjacency, hence an
    identity row in ``L``.
    """
    A = g.A
    n = g.n
    if self_loops and n:
        A = A + np.eye(n)
    deg = ad.sum_(A, axis=1)
    dinv = ad.rsqrt_pos(deg)
    norm_adj = A * (ad.reshape(dinv, (n, 1)) * ad.reshape(dinv, (1, n)))
    lap = np.eye(n) - norm_adj
    eig = None
    if with_eig:
        L = lap.value
        eig = sym_eig(0.5 * (L + L.T))
    return GraphOperators(deg, norm_adj, lap, eig)


def graph_to_json(g: Graph) -> dict:
    return {
        "n": g.n,
        "kind": g.kind if g.kind == "inter" else f"intra:{g.modality}",
        "adjacency": [[float(x) for x in row] for row in g.adjacency],
    }


def dump_graph(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(graph_to_json(g), fh)
        fh.write("\n")
