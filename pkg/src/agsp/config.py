"""Training configuration and its validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError

BRANCH_MODES = ("sequential", "parallel")
GRAPH_ANCHORS = ("labels", "centroid")
ATTENTION_ANCHORS = ("label_embedding", "centroid")
LAMBDA_MODES = ("power", "bound")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 100
    gcn_layers: int = 3
    hidden: int = 128
    latent_dim: int = 128
    dropout: float = 0.3
    chebyshev_k: int = 3
    hop_k: int = 2
    epsilon: float | None = None  # None: per-batch squared 25th-percentile distance
    sigma: float | None = None    # None: per-batch median distance
    lambda_mode: str = "power"
    branch_mode: str = "sequential"
    share_filters: bool = False
    self_loops: bool = False
    # Label-based anchors leak the target into training-time graphs and
    # attention; the default uses centroids in both phases.
    graph_anchor_train: str = "centroid"
    graph_anchor_eval: str = "centroid"
    attention_anchor_train: str = "centroid"
    attention_anchor_eval: str = "centroid"
    anchor_dim: int | None = None  # None: equal to the fused embedding width
    attention_scale: str = "sqrt"  # "none" | "sqrt": divide logits by sqrt(d_h)
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, "Adam betas must be in [0, 1)"),
            (self.adam_eps > 0, "adam_eps must be > 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.gcn_layers >= 0, "gcn_layers must be >= 0"),
            (self.hidden >= 1 and self.latent_dim >= 1, "hidden and latent_dim must be >= 1"),
            (0 <= self.dropout < 1, "dropout must be in [0, 1)"),
            (self.chebyshev_k >= 0, "chebyshev_k must be >= 0"),
            (self.hop_k >= 0, "hop_k must be >= 0"),
            (self.epsilon is None or self.epsilon > 0, "epsilon must be > 0"),
            (self.sigma is None or self.sigma > 0, "sigma must be > 0"),
            (self.lambda_mode in LAMBDA_MODES, f"lambda_mode must be one of {LAMBDA_MODES}"),
            (self.branch_mode in BRANCH_MODES, f"branch_mode must be one of {BRANCH_MODES}"),
            (self.graph_anchor_train in GRAPH_ANCHORS and self.graph_anchor_eval in GRAPH_ANCHORS,
             f"graph anchors must be one of {GRAPH_ANCHORS}"),
            (self.attention_anchor_train in ATTENTION_ANCHORS and self.attention_anchor_eval in ATTENTION_ANCHORS,
             f"attention anchors must be one of {ATTENTION_ANCHORS}"),
            (self.anchor_dim is None or self.anchor_dim >= 1, "anchor_dim must be >= 1"),
            (self.attention_scale in ("none", "sqrt"), "attention_scale must be 'none' or 'sqrt'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if self.graph_anchor_eval == "labels" or self.attention_anchor_eval == "label_embedding":
            raise ConfigError("label-based anchors are unavailable at inference")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def parse_value(field_name: str, text: str):
    """Coerce a text value to the type of the named :class:`TrainConfig` field."""
    ftypes = {f.name: f.type for f in fields(TrainConfig)}
    t = ftypes[field_name]
    s = text.strip()
    if "None" in str(t) and s.lower() in ("", "none", "auto"):
        return None
    try:
        if "bool" in str(t):
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if "int" in str(t):
            return int(s)
        if "float" in str(t):
            return float(s)
    except ValueError:
        raise ConfigError(f"bad value for {field_name}: {text!r}") from None
    return s
