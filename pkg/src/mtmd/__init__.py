"""Memory-augmented concept-graph engine for cross-sectional trend forecasting."""

from .autodiff import Tensor, backward
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (ConceptGraph, DateSlice, FeaturePanel, SyntheticSpec,
                   generate_synthetic, load_panel)
from .harness import TrainConfig, TrainLog, evaluate, export_embeddings, run_ablation, train
from .memory import MemoryBank, global_aggregate, init_bank, memorize
from .metrics import MetricReport, aggregate, ic, precision_at_n, rank_ic
from .model import (ForwardTrace, ModelConfig, ModelParams, forward, init_banks,
                    init_parameters, mse_loss, predict)

__all__ = [
    "Tensor", "backward",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "ConceptGraph", "DateSlice", "FeaturePanel", "SyntheticSpec",
    "generate_synthetic", "load_panel",
    "TrainConfig", "TrainLog", "evaluate", "export_embeddings", "run_ablation", "train",
    "MemoryBank", "global_aggregate", "init_bank", "memorize",
    "MetricReport", "aggregate", "ic", "precision_at_n", "rank_ic",
    "ForwardTrace", "ModelConfig", "ModelParams", "forward", "init_banks",
    "init_parameters", "mse_loss", "predict",
]

__version__ = "0.1.0"
