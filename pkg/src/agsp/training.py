"""Training and evaluation loops, plus the early-fusion baseline."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .data import MultimodalDataset, Schema
from .errors import TrainingError
from .gcn import dropout_mask
from .metrics import MetricsReport, multiclass_report, multilabel_report
from .model import (Batch, bind, forward, init_params, loss_fn, make_batch, probabilities)
from .numeric import Rng
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

SPLIT = (0.7, 0.1, 0.2)

ForwardFn = Callable[[Batch, dict, TrainConfig, bool, "Rng | None"], ad.Tensor]


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float | None
    val_acc: float | None


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    log: list[EpochLog] = field(default_factory=list)


def split_indices(n: int, seed: int, fractions=SPLIT) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    perm = Rng(seed).child("split").permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def split_dataset(ds: MultimodalDataset, seed: int):
    tr, va, te = split_indices(len(ds), seed)
    return ds.subset(tr), ds.subset(va), ds.subset(te)


def agsp_scores(batch, params, config, training, rng):
    return forward(batch, params, config, training, rng).scores


def _batches(ds: MultimodalDataset, size: int, order=None):
    idx = np.arange(len(ds)) if order is None else order
    for start in range(0, len(idx), size):
        yield make_batch([ds.instances[i] for i in idx[start:start + size]], ds.schema)


def _accuracy(scores: np.ndarray, labels: np.ndarray, task: str) -> float:
    if task == "multiclass":
        return float(np.mean(np.argmax(scores, axis=1) == labels))
    return float(np.mean(np.all((scores >= 0) == (labels > 0.5), axis=1)))


def _eval_loss(ds, params, config, forward_fn) -> tuple[float, float]:
    total_loss, total_acc, count = 0.0, 0.0, 0
    for batch in _batches(ds, config.batch_size):
        s = forward_fn(batch, params, config, False, None)
        total_loss += float(loss_fn(s, batch.labels, ds.schema.task).value) * batch.n
        total_acc += _accuracy(s.value, batch.labels, ds.schema.task) * batch.n
        count += batch.n
    return total_loss / count, total_acc / count


def fit(train_set: MultimodalDataset, config: TrainConfig, val_set: MultimodalDataset | None = None,
        init: Callable[[Schema, TrainConfig, Rng], dict] = init_params,
        forward_fn: ForwardFn = agsp_scores, on_epoch: Callable[[EpochLog], None] | None = None) -> TrainResult:
    """Mini-batch Adam training; deterministic in ``config.seed``.

    Batches are reshuffled every epoch and graphs are rebuilt per batch.
    """
    root = Rng(config.seed)
    params = init(train_set.schema, config, root.child("init"))
    result = TrainResult(params)
    if config.epochs == 0 or len(train_set) == 0:
        return result
    shuffle_rng = root.child("shuffle")
    drop_rng = root.child("dropout")
    state = AdamState()
    task = train_set.schema.task
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        losses, accs, sizes = [], [], []
        for batch in _batches(train_set, config.batch_size, order):
            tape = ad.Tape()
            bound = bind(params, tape)
            scores = forward_fn(batch, bound, config, True, drop_rng)
            loss = loss_fn(scores, batch.labels, task)
            lv = float(loss.value)
            if not np.isfinite(lv):
                where = tape.first_nonfinite()
                raise TrainingError(f"non-finite loss at epoch {epoch}; first non-finite tensor: {where}")
            grads = ad.grad(tape, loss)
            params, state = adam_step(params, grads, state, config.learning_rate, config.beta1,
                                      config.beta2, config.adam_eps)
            bad = [k for k, v in params.items() if not np.all(np.isfinite(v))]
            if bad:
                raise TrainingError(f"non-finite parameter {bad[0]!r} after step at epoch {epoch}")
            losses.append(lv)
            accs.append(_accuracy(scores.value, batch.labels, task))
            sizes.append(batch.n)
        w = np.asarray(sizes, dtype=np.float64)
        entry = EpochLog(epoch, float(np.dot(losses, w) / w.sum()), float(np.dot(accs, w) / w.sum()), None, None)
        if val_set is not None and len(val_set):
            entry.val_loss, entry.val_acc = _eval_loss(val_set, params, config, forward_fn)
        result.log.append(entry)
        if on_epoch:
            on_epoch(entry)
        log.debug("epoch %d loss %.4f acc %.3f", epoch, entry.train_loss, entry.train_acc)
    result.params = params
    return result


def train(dataset: MultimodalDataset, config: TrainConfig, val_set: MultimodalDataset | None = None,
          on_epoch=None) -> TrainResult:
    return fit(dataset, config, val_set, on_epoch=on_epoch)


def evaluate(dataset: MultimodalDataset, params: dict, config: TrainConfig, drop_modality: str | None = None,
             forward_fn: ForwardFn = agsp_scores) -> MetricsReport:
    """Dropout-free evaluation in dataset order.

    With ``drop_modality`` that modality is removed from every instance before
    the forward pass; instances left with no modality are skipped and counted.
    """
    schema = dataset.schema
    if drop_modality is not None:
        schema.index(drop_modality)
    kept, skipped = [], 0
    for inst in dataset.instances:
        if drop_modality is not None:
            inst = inst.without(drop_modality)
            if not any(v is not None for v in inst.features.values()):
                skipped += 1
                continue
        kept.append(inst)
    probs, labels = [], []
    for start in range(0, len(kept), config.batch_size):
        batch = make_batch(kept[start:start + config.batch_size], schema)
        s = forward_fn(batch, params, config, False, None)
        probs.append(probabilities(s, schema.task))
        labels.append(batch.labels)
    C = schema.num_classes
    P = np.concatenate(probs) if probs else np.zeros((0, C))
    if schema.task == "multiclass":
        Y = np.concatenate(labels) if labels else np.zeros(0, dtype=np.intp)
        return multiclass_report(Y, P, skipped)
    Y = np.concatenate(labels) if labels else np.zeros((0, C))
    return multilabel_report(Y, P, n_skipped=skipped)


def write_epoch_csv(entries: list[EpochLog], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for e in entries:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.train_acc),
                        "" if e.val_loss is None else repr(e.val_loss),
                        "" if e.val_acc is None else repr(e.val_acc)])


# Early-fusion baseline ----------------------------------------------------------

def init_baseline(schema: Schema, config: TrainConfig, rng: Rng) -> dict[str, np.ndarray]:
    d, h, C = config.latent_dim, config.hidden, schema.num_classes
    M = len(schema.names)
    out = {}
    for m, d_m in schema.modalities:
        a = np.sqrt(6.0 / (d + d_m))
        out[f"proj.{m}.W"] = rng.uniform((d, d_m), -a, a)
        out[f"proj.{m}.b"] = np.zeros(d)
    a = np.sqrt(6.0 / (M * d + h))
    out["dense1.W"] = rng.uniform((h, M * d), -a, a)
    out["dense1.b"] = np.zeros(h)
    a = np.sqrt(6.0 / (h + C))
    out["dense2.W"] = rng.uniform((C, h), -a, a)
    out["dense2.b"] = np.zeros(C)
    return out


def baseline_scores(batch: Batch, params: dict, config: TrainConfig, training: bool, rng: Rng | None):
    """Concatenate per-modality projections (zeros when absent) into a 2-layer MLP."""
    n = batch.n
    blocks = []
    for m in batch.schema.names:
        rows, idx = batch.features[m]
        W, b = ad.as_tensor(params[f"proj.{m}.W"]), params[f"proj.{m}.b"]
        blocks.append(ad.scatter_rows(ad.as_tensor(rows) @ W.T + b, idx, n) if idx.size
                      else ad.Tensor(np.zeros((n, W.shape[0]))))
    x = ad.concat(blocks, axis=1)
    hdn = x @ ad.as_tensor(params["dense1.W"]).T + params["dense1.b"]
    if training and config.dropout > 0:
        hdn = hdn * dropout_mask(hdn.shape, config.dropout, rng)
    hdn = ad.relu(hdn)
    return hdn @ ad.as_tensor(params["dense2.W"]).T + params["dense2.b"]


def train_baseline(dataset: MultimodalDataset, config: TrainConfig, val_set=None) -> TrainResult:
    return fit(dataset, config, val_set, init=init_baseline, forward_fn=baseline_scores)
