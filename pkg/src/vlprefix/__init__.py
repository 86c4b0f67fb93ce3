"""Prefix-injected multimodal context reasoning on a synthetic benchmark."""

from .data import DatasetSplit, GenConfig, Instance, Vocab, generate
from .model import ModelConfig, Pipeline
from .rng import Rng
from .tensor import Parameter, Tensor
from .training import Metrics, RunConfig, Trainer, evaluate

__all__ = [
    "DatasetSplit", "GenConfig", "Instance", "Vocab", "generate",
    "ModelConfig", "Pipeline", "Rng", "Parameter", "Tensor",
    "Metrics", "RunConfig", "Trainer", "evaluate",
]
