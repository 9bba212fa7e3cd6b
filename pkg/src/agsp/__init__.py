"""Multimodal graph fusion: dual graphs, spectral filters, GCN streams and attention."""

from .config import TrainConfig
from .data import (Instance, MultimodalDataset, Schema, SynthConfig, generate_synthetic, load_dataset,
                   save_dataset)
from .model import forward, init_params, load_checkpoint, save_checkpoint
from .numeric import Rng
from .training import evaluate, train

__all__ = [
    "Instance", "MultimodalDataset", "Rng", "Schema", "SynthConfig", "TrainConfig", "evaluate",
    "forward", "generate_synthetic", "init_params", "load_checkpoint", "load_dataset", "save_checkpoint",
    "save_dataset", "train",
]
__version__ = "0.1.0"
