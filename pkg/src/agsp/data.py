"""Multimodal datasets: schema, synthetic generation, JSON-lines I/O, projection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, LoadError, ShapeError
from .numeric import Rng

DEFAULT_MODALITIES = ("text", "image", "audio")
DEFAULT_DIMS = {"text": 32, "image": 64, "audio": 48}
TASKS = ("multiclass", "multilabel")


@dataclass(frozen=True)
class Schema:
    modalities: tuple[tuple[str, int], ...]
    num_classes: int
    task: str = "multiclass"

    def __post_init__(self):
        names = [m for m, _ in self.modalities]
        if len(set(names)) != len(names):
            raise ConfigError("modality names must be unique")
        if not names:
            raise ConfigError("schema needs at least one modality")
        for m, d in self.modalities:
            if not isinstance(d, int) or isinstance(d, bool) or d <= 0:
                raise ConfigError(f"modality {m!r} needs a positive integer dimension")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if not isinstance(self.num_classes, int) or self.num_classes < 1:
            raise ConfigError("num_classes must be a positive integer")

    @classmethod
    def from_dims(cls, dims: Mapping[str, int], num_classes: int, task: str = "multiclass") -> "Schema":
        return cls(tuple((str(k), int(v)) for k, v in dims.items()), int(num_classes), task)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(m for m, _ in self.modalities)

    @property
    def dims(self) -> dict[str, int]:
        return dict(self.modalities)

    def index(self, name: str) -> int:
        """1-based modality index in configuration order."""
        try:
            return self.names.index(name) + 1
        except ValueError:
            raise ConfigError(f"unknown modality {name!r}") from None

    def to_json(self) -> dict:
        return {"modalities": self.dims, "num_classes": self.num_classes, "task": self.task}


@dataclass(frozen=True)
class Instance:
    id: str
    label: int | tuple[int, ...]
    features: Mapping[str, np.ndarray | None]

    @property
    def presence(self) -> dict[str, bool]:
        return {m: v is not None for m, v in self.features.items()}

    def validate(self, schema: Schema) -> None:
        if set(self.features) != set(schema.names):
            raise ShapeError(f"instance {self.id}: modalities {sorted(self.features)} != schema")
        if not any(v is not None for v in self.features.values()):
            raise ShapeError(f"instance {self.id}: no modality present")
        for m, d in schema.modalities:
            v = self.features[m]
            if v is not None:
                if v.shape != (d,):
                    raise ShapeError(f"instance {self.id}: {m} has length {v.shape}, expected {d}")
                if not np.all(np.isfinite(v)):
                    raise ShapeError(f"instance {self.id}: {m} has non-finite values")
        labels = self.label if isinstance(self.label, tuple) else (self.label,)
        if schema.task == "multiclass" and isinstance(self.label, tuple):
            raise ShapeError(f"instance {self.id}: multiclass label must be a single index")
        if schema.task == "multilabel" and not isinstance(self.label, tuple):
            raise ShapeError(f"instance {self.id}: multilabel label must be a list")
        for c in labels:
            if not 0 <= c < schema.num_classes:
                raise ShapeError(f"instance {self.id}: label {c} out of range")

    def without(self, modality: str) -> "Instance":
        feats = dict(self.features)
        feats[modality] = None
        return Instance(self.id, self.label, feats)


@dataclass
class MultimodalDataset:
    schema: Schema
    instances: list[Instance] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for inst in self.instances:
            if inst.id in seen:
                raise ShapeError(f"duplicate id {inst.id!r}")
            seen.add(inst.id)
            inst.validate(self.schema)

    def __len__(self):
        return len(self.instances)

    def subset(self, indices: Sequence[int]) -> "MultimodalDataset":
        return MultimodalDataset(self.schema, [self.instances[i] for i in indices])

    def labels_array(self) -> np.ndarray:
        """``(n,)`` ints for multiclass, ``(n, C)`` multi-hot for multilabel."""
        if self.schema.task == "multiclass":
            return np.array([i.label for i in self.instances], dtype=np.intp)
        out = np.zeros((len(self), self.schema.num_classes))
        for r, inst in enumerate(self.instances):
            out[r, list(inst.label)] = 1.0
        return out


# Synthetic data -------------------------------------------------------------

@dataclass
class SynthConfig:
    n: int = 600
    num_classes: int = 3
    dims: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_DIMS))
    separability: dict[str, float] = field(default_factory=lambda: {"text": 1.2, "image": 1.2, "audio": 0.0})
    dropout: float = 0.0
    task: str = "multiclass"
    allow_no_signal: bool = False


def generate_synthetic(config: SynthConfig, rng: Rng) -> MultimodalDataset:
    """Class-conditional Gaussian clusters, one set per modality.

    For modality ``m`` with separability ``s`` the class means sit at
    ``s * sqrt(2) * q_c`` for orthonormal random directions ``q_c``, so any two
    class means are ``2 s`` apart; noise is unit isotropic. ``s = 0`` makes a
    modality pure noise.
    """
    if config.num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if config.n < config.num_classes:
        raise ConfigError("n must be at least the number of classes")
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigError("dropout must be in [0, 1)")
    if set(config.separability) != set(config.dims):
        raise ConfigError("separability must list exactly the configured modalities")
    if all(s == 0 for s in config.separability.values()) and not config.allow_no_signal:
        raise ConfigError("all separabilities are 0; the data would carry no label signal")
    schema = Schema.from_dims(config.dims, config.num_classes, config.task)
    C, n = config.num_classes, config.n

    label_rng = rng.child("labels")
    if config.task == "multiclass":
        # balanced then shuffled
        labels = np.resize(np.arange(C), n)[label_rng.permutation(n)]
        memberships = [np.array([c]) for c in labels]
    else:
        memberships = []
        for _ in range(n):
            k = int(label_rng.integers(1, 3))
            memberships.append(np.sort(label_rng.generator.choice(C, size=min(k, C), replace=False)))

    feats: dict[str, np.ndarray] = {}
    for m, d in schema.modalities:
        mrng = rng.child(f"modality:{m}")
        g = mrng.normal((d, max(C, 1)))
        q, _ = np.linalg.qr(g) if d >= C else (g / np.linalg.norm(g, axis=0), None)
        means = config.separability[m] * np.sqrt(2.0) * q[:, :C].T
        noise = mrng.normal((n, d))
        centre = np.stack([means[mem].mean(axis=0) for mem in memberships])
        feats[m] = centre + noise

    drop_rng = rng.child("dropout")
    M = len(schema.names)
    present = drop_rng.uniform((n, M)) >= config.dropout
    rescue = drop_rng.integers(0, M, size=n)
    for i in range(n):
        if not present[i].any():
            present[i, rescue[i]] = True

    width = max(4, len(str(n)))
    instances = []
    for i in range(n):
        f = {m: (feats[m][i].copy() if present[i, j] else None) for j, m in enumerate(schema.names)}
        label = int(memberships[i][0]) if config.task == "multiclass" else tuple(int(c) for c in memberships[i])
        instances.append(Instance(f"s{i + 1:0{width}d}", label, f))
    return MultimodalDataset(schema, instances)


# JSON-lines format ----------------------------------------------------------

_RECORD_KEYS = {"id", "label", "features"}
_SCHEMA_KEYS = {"modalities", "num_classes", "task"}


def _schema_from_json(obj, line: int) -> Schema:
    if not isinstance(obj, dict) or set(obj) != _SCHEMA_KEYS:
        raise LoadError(f"schema must have exactly the keys {sorted(_SCHEMA_KEYS)}", line)
    mods, C = obj["modalities"], obj["num_classes"]
    if not isinstance(mods, dict):
        raise LoadError("modalities must be an object", line)
    ints = [*mods.values(), C]
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in ints):
        raise LoadError("modality dimensions and num_classes must be integers", line)
    try:
        return Schema.from_dims(mods, C, obj["task"])
    except ConfigError as e:
        raise LoadError(str(e), line) from None


def _parse_record(obj, schema: Schema, line: int) -> Instance:
    if not isinstance(obj, dict) or set(obj) != _RECORD_KEYS:
        raise LoadError(f"record must have exactly the keys {sorted(_RECORD_KEYS)}", line)
    if not isinstance(obj["id"], str):
        raise LoadError("id must be a string", line)
    lab = obj["label"]
    if schema.task == "multiclass":
        if not isinstance(lab, int) or isinstance(lab, bool):
            raise LoadError("multiclass label must be an integer", line)
        label: int | tuple[int, ...] = lab
    else:
        if not isinstance(lab, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in lab):
            raise LoadError("multilabel label must be a list of integers", line)
        label = tuple(lab)
    fobj = obj["features"]
    if not isinstance(fobj, dict) or set(fobj) != set(schema.names):
        raise LoadError(f"features must have exactly the keys {list(schema.names)}", line)
    feats = {}
    for m in schema.names:
        v = fobj[m]
        if v is None:
            feats[m] = None
            continue
        if not isinstance(v, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v
        ):
            raise LoadError(f"{m} features must be a list of numbers or null", line)
        feats[m] = np.array(v, dtype=np.float64)
    inst = Instance(obj["id"], label, feats)
    try:
        inst.validate(schema)
    except ShapeError as e:
        raise LoadError(str(e), line) from None
    return inst


def loads_dataset(text: str) -> MultimodalDataset:
    if not text:
        raise LoadError("empty file", 1)
    if not text.endswith("\n"):
        text_lines = text.split("\n")
    else:
        text_lines = text[:-1].split("\n")
    schema = None
    instances: list[Instance] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text_lines, start=1):
        if raw.strip() == "":
            raise LoadError("blank line", lineno)
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise LoadError(f"malformed JSON: {e.msg}", lineno) from None
        if schema is None:
            schema = _schema_from_json(obj, lineno)
            continue
        inst = _parse_record(obj, schema, lineno)
        if inst.id in seen:
            raise LoadError(f"duplicate id {inst.id!r}", lineno)
        seen.add(inst.id)
        instances.append(inst)
    return MultimodalDataset(schema, instances)


def dumps_dataset(dataset: MultimodalDataset) -> str:
    lines = [json.dumps(dataset.schema.to_json())]
    for inst in dataset.instances:
        label = list(inst.label) if isinstance(inst.label, tuple) else int(inst.label)
        feats = {m: (None if inst.features[m] is None else [float(x) for x in inst.features[m]])
                 for m in dataset.schema.names}
        lines.append(json.dumps({"id": inst.id, "label": label, "features": feats}))
    return "\n".join(lines) + "\n"


def load_dataset(path) -> MultimodalDataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise LoadError(f"cannot read {path}: {e.strerror}") from None
    return loads_dataset(text)


def save_dataset(dataset: MultimodalDataset, path) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8", newline="\n")


# Projection into the shared space ---------------------------------------------

@dataclass
class ProjectionParams:
    weights: dict[str, object]  # modality -> (d, d_m) array or Tensor
    biases: dict[str, object]   # modality -> (d,) array or Tensor

    @property
    def dim(self) -> int:
        return next(iter(self.weights.values())).shape[0]


def project(x, params: ProjectionParams, modality: str):
    """Affine map ``W x + b`` into the shared space.

    ``x`` may be a single ``(d_m,)`` vector or a stack of rows ``(n, d_m)``;
    rows are mapped independently. Returns a :class:`~agsp.autodiff.Tensor`.
    """
    W = ad.as_tensor(params.weights[modality])
    b = ad.as_tensor(params.biases[modality])
    x = ad.as_tensor(x)
    d_m = W.shape[1]
    if x.shape[-1] != d_m:
        raise ShapeError(f"{modality}: expected feature length {d_m}, got {x.shape[-1]}")
    if x.ndim == 1:
        return W @ x + b
    return x @ W.T + b
