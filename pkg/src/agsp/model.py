"""End-to-end model: projection, dual graphs, filtering, GCNs, fusion, head.

Parameters live in a flat ``dict[str, np.ndarray]``; :func:`forward` accepts
either those arrays or tape tensors bound to the same names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .data import Instance, MultimodalDataset, ProjectionParams, Schema, project
from .errors import CheckpointError, DataError, PreconditionError, ShapeError
from .fusion import anchors, attention_weights, fuse, gate
from .gcn import GcnLayerParams, GcnStack, concat_intra_inter, gcn_forward
from .graphs import (Graph, GraphOperators, build_inter_graph, build_intra_graph, graph_operators,
                     restrict, semantic_embeddings)
from .numeric import Rng
from .spectral import ChebyshevFilter, chebyshev_apply, estimate_lambda_max

CHECKPOINT_FORMAT = "agsp-checkpoint/1"


@dataclass
class Batch:
    ids: list[str]
    features: dict[str, tuple[np.ndarray, np.ndarray]]  # modality -> (rows, batch indices)
    mask: np.ndarray  # (n, M) presence
    labels: np.ndarray | None  # (n,) ints or (n, C) multi-hot
    schema: Schema

    @property
    def n(self) -> int:
        return len(self.ids)


def make_batch(instances: Sequence[Instance], schema: Schema, with_labels: bool = True) -> Batch:
    n = len(instances)
    if n == 0:
        raise PreconditionError("batch must be nonempty")
    names = schema.names
    mask = np.zeros((n, len(names)), dtype=bool)
    feats = {}
    for j, m in enumerate(names):
        idx = [i for i, inst in enumerate(instances) if inst.features[m] is not None]
        mask[idx, j] = True
        rows = np.stack([instances[i].features[m] for i in idx]) if idx else np.zeros((0, schema.dims[m]))
        feats[m] = (rows, np.asarray(idx, dtype=np.intp))
    if not mask.any(axis=1).all():
        raise PreconditionError("every instance needs at least one present modality")
    labels = None
    if with_labels:
        if schema.task == "multiclass":
            labels = np.array([inst.label for inst in instances], dtype=np.intp)
        else:
            labels = np.zeros((n, schema.num_classes))
            for r, inst in enumerate(instances):
                labels[r, list(inst.label)] = 1.0
    return Batch([i.id for i in instances], feats, mask, labels, schema)


# Parameter layout -----------------------------------------------------------

def stream_dims(schema: Schema, config: TrainConfig) -> dict[str, int]:
    d, h = config.latent_dim, config.hidden
    gcn_out = h if config.gcn_layers else d
    per_stream = gcn_out if config.branch_mode == "sequential" else d + gcn_out
    d_h = 2 * per_stream
    d_s = config.anchor_dim or d_h
    return {"d": d, "stream": per_stream, "d_h": d_h, "d_s": d_s}


def param_shapes(schema: Schema, config: TrainConfig) -> dict[str, tuple[int, ...]]:
    dims = stream_dims(schema, config)
    d, d_h, d_s = dims["d"], dims["d_h"], dims["d_s"]
    C, K = schema.num_classes, config.chebyshev_k
    shapes: dict[str, tuple[int, ...]] = {}
    for m, d_m in schema.modalities:
        shapes[f"proj.{m}.W"] = (d, d_m)
        shapes[f"proj.{m}.b"] = (d,)
    filt_keys = ["shared"] if config.share_filters else list(schema.names)
    for key in filt_keys:
        shapes[f"cheb.intra.{key}"] = (K + 1,)
        shapes[f"cheb.inter.{key}"] = (K + 1,)

    def stack(prefix):
        d_in = d
        for layer in range(config.gcn_layers):
            for k in range(config.hop_k + 1):
                shapes[f"{prefix}.{layer}.W{k}"] = (d_in, config.hidden)
            d_in = config.hidden

    for m in schema.names:
        stack(f"gcn.intra.{m}")
    stack("gcn.inter")
    shapes["fusion.W_a"] = (d_h, d_s)
    shapes["fusion.W_s"] = (d_s, d_h)
    shapes["fusion.W_g"] = (d_h, d_h)
    shapes["fusion.b_g"] = (d_h,)
    shapes["class_table"] = (C, d_s)
    shapes["head.W"] = (C, d_h)
    shapes["head.b"] = (C,)
    return shapes


def _glorot(rng: Rng, shape, gain: float = 1.0) -> np.ndarray:
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], shape[0])
    a = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -a, a)


def init_params(schema: Schema, config: TrainConfig, rng: Rng | None = None) -> dict[str, np.ndarray]:
    rng = rng or Rng(config.seed).child("init")
    out = {}
    for name, shape in param_shapes(schema, config).items():
        if name.endswith(".b") or name == "fusion.b_g":
            out[name] = np.zeros(shape)
        elif name.startswith("cheb."):
            out[name] = np.zeros(shape)
            out[name][0] = 1.0
        elif name.startswith("gcn."):
            # GCN weights are stored (d_in, d_out); hop terms add, so shrink by hop count
            out[name] = _glorot(rng, shape[::-1], 1.0 / np.sqrt(config.hop_k + 1)).T.copy()
        elif name == "class_table":
            out[name] = rng.normal(shape) / np.sqrt(shape[1])
        elif name == "fusion.W_a":
            out[name] = _glorot(rng, shape, 0.1)
        else:
            out[name] = _glorot(rng, shape)
    return out


def bind(params: dict[str, np.ndarray], tape: ad.Tape) -> dict[str, ad.Tensor]:
    return {k: tape.param(k, v) for k, v in params.items()}


def gcn_stack(params: dict, prefix: str, config: TrainConfig) -> GcnStack:
    layers = []
    for layer in range(config.gcn_layers):
        ws = [params[f"{prefix}.{layer}.W{k}"] for k in range(config.hop_k + 1)]
        layers.append(GcnLayerParams(ws, config.dropout))
    return GcnStack(layers)


def projection_params(params: dict, schema: Schema) -> ProjectionParams:
    return ProjectionParams({m: params[f"proj.{m}.W"] for m in schema.names},
                            {m: params[f"proj.{m}.b"] for m in schema.names})


# Forward -------------------------------------------------------------------

@dataclass
class ForwardOutput:
    scores: ad.Tensor
    alpha: ad.Tensor
    intra_graphs: dict[str, Graph] = field(default_factory=dict)
    inter_graph: Graph | None = None


def _filter(params, kind: str, m: str, ops: GraphOperators, X, config: TrainConfig):
    key = "shared" if config.share_filters else m
    lam = estimate_lambda_max(ops) if config.lambda_mode == "power" else 2.0
    if ad.value(lam) <= 0:
        lam = 2.0
    return chebyshev_apply(ChebyshevFilter(params[f"cheb.{kind}.{key}"], lam), ops, X)


def forward(batch: Batch, params: dict, config: TrainConfig, training: bool = False,
            rng: Rng | None = None) -> ForwardOutput:
    schema = batch.schema
    expected = param_shapes(schema, config)
    for name, shape in expected.items():
        if name not in params:
            raise ShapeError(f"missing parameter {name!r}")
        if tuple(ad.value(params[name]).shape) != shape:
            raise ShapeError(f"parameter {name!r} has shape {ad.value(params[name]).shape}, expected {shape}")
    n = batch.n
    proj = projection_params(params, schema)
    present = [m for m in schema.names if batch.features[m][1].size]

    projected = {m: (project(batch.features[m][0], proj, m), batch.features[m][1]) for m in present}

    graph_mode = config.graph_anchor_train if training else config.graph_anchor_eval
    E = semantic_embeddings(n, graph_mode, labels=batch.labels, class_table=params["class_table"],
                            projected=projected)
    inter = build_inter_graph(E, config.sigma)

    inter_stack = gcn_stack(params, "gcn.inter", config)
    blocks = []
    intra_graphs = {}
    for m in schema.names:
        if m not in projected:
            blocks.append(ad.Tensor(np.zeros((n, stream_dims(schema, config)["d_h"]))))
            continue
        X, idx = projected[m]
        g_intra = build_intra_graph(X, config.epsilon, modality=m, nodes=idx)
        intra_graphs[m] = g_intra
        ops_intra = graph_operators(g_intra, self_loops=config.self_loops)
        ops_inter = graph_operators(restrict(inter, idx, m), self_loops=config.self_loops)
        F_intra = _filter(params, "intra", m, ops_intra, X, config)
        F_inter = _filter(params, "inter", m, ops_inter, X, config)
        intra_stack = gcn_stack(params, f"gcn.intra.{m}", config)
        if config.branch_mode == "sequential":
            H_intra = gcn_forward(F_intra, ops_intra, intra_stack, training, rng)
            H_inter = gcn_forward(F_inter, ops_inter, inter_stack, training, rng)
        else:
            H_intra = ad.concat([F_intra, gcn_forward(X, ops_intra, intra_stack, training, rng)], axis=1)
            H_inter = ad.concat([F_inter, gcn_forward(X, ops_inter, inter_stack, training, rng)], axis=1)
        blocks.append(ad.scatter_rows(concat_intra_inter(H_intra, H_inter), idx, n))

    att_mode = config.attention_anchor_train if training else config.attention_anchor_eval
    S = anchors(blocks, batch.mask, att_mode, W_s=params["fusion.W_s"], labels=batch.labels,
                class_table=params["class_table"])
    scale = 1.0 / np.sqrt(stream_dims(schema, config)["d_h"]) if config.attention_scale == "sqrt" else 1.0
    alpha = attention_weights(blocks, S, params["fusion.W_a"], batch.mask, scale)
    z = fuse(alpha, blocks)
    z_fused = gate(z, params["fusion.W_g"], params["fusion.b_g"])
    scores = z_fused @ ad.as_tensor(params["head.W"]).T + params["head.b"]
    return ForwardOutput(scores, alpha, intra_graphs, inter)


# Loss ------------------------------------------------------------------------

PROB_CLAMP = 1e-12


def loss_fn(scores, labels, task: str = "multiclass"):
    """Mean softmax cross-entropy (multiclass) or mean per-class BCE (multilabel).

    Log-probabilities are clamped to ``[log 1e-12, log(1 - 1e-12)]``.
    """
    scores = ad.as_tensor(scores)
    n, C = scores.shape
    lo, hi = np.log(PROB_CLAMP), np.log1p(-PROB_CLAMP)
    labels = np.asarray(labels)
    if task == "multiclass":
        if labels.shape != (n,):
            raise ShapeError(f"labels must have shape ({n},)")
        if labels.size and (labels.min() < 0 or labels.max() >= C):
            raise DataError(f"label out of range for {C} classes")
        onehot = np.zeros((n, C))
        onehot[np.arange(n), labels.astype(np.intp)] = 1.0
        logp = ad.clip(ad.log_softmax(scores, axis=1), lo, hi)
        return -ad.sum_(logp * onehot) * (1.0 / n)
    if labels.shape != (n, C):
        raise ShapeError(f"labels must have shape ({n}, {C})")
    if not np.all((labels == 0) | (labels == 1)):
        raise DataError("multilabel targets must be 0/1")
    lp = ad.clip(ad.log_sigmoid(scores), lo, hi)
    ln = ad.clip(ad.log_sigmoid(-scores), lo, hi)
    return -ad.sum_(lp * labels + ln * (1.0 - labels)) * (1.0 / (n * C))


def probabilities(scores, task: str = "multiclass") -> np.ndarray:
    s = ad.value(scores)
    if task == "multiclass":
        return np.exp(ad.log_softmax(s, axis=1).value)
    return ad.sigmoid(s).value


# Checkpoints ----------------------------------------------------------------

def save_checkpoint(params: dict, path, schema: Schema | None = None, config: TrainConfig | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "schema": schema.to_json() if schema else None,
        "config": config.to_dict() if config else None,
        "tensors": {k: {"shape": list(np.shape(v)), "data": [float(x) for x in np.ravel(v)]}
                    for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path, schema: Schema | None = None, config: TrainConfig | None = None):
    """Read a checkpoint; returns ``(params, meta)``.

    With ``schema`` and ``config`` given, every expected tensor must be present
    with the expected shape. Nothing is returned on any failure.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT or "tensors" not in doc:
        raise CheckpointError(f"{path} is not an agsp checkpoint")
    params = {}
    for name, t in doc["tensors"].items():
        try:
            arr = np.array(t["data"], dtype=np.float64).reshape(t["shape"])
        except (KeyError, TypeError, ValueError):
            raise CheckpointError(f"tensor {name!r} is malformed") from None
        params[name] = arr
    if schema is not None and config is not None:
        for name, shape in param_shapes(schema, config).items():
            if name not in params:
                raise CheckpointError(f"missing tensor {name!r}")
            if params[name].shape != shape:
                raise CheckpointError(f"tensor {name!r} has shape {params[name].shape}, config expects {shape}")
    meta = {"schema": doc.get("schema"), "config": doc.get("config")}
    return params, meta
