"""Adaptive graph reconstruction for multi-view graph clustering on heterophilous graphs."""

from .clustering import ClusterResult, kmeans, to_onehot
from .data import SynthSpec, generate_synthetic, load_dataset, write_dataset
from .graph import MultiViewGraph, ViewState, edge_homophily
from .metrics import MetricsBundle, evaluate
from .model import TrainConfig, TrainResult, train

__all__ = [
    "ClusterResult",
    "MetricsBundle",
    "MultiViewGraph",
    "SynthSpec",
    "TrainConfig",
    "TrainResult",
    "ViewState",
    "edge_homophily",
    "evaluate",
    "generate_synthetic",
    "kmeans",
    "load_dataset",
    "to_onehot",
    "train",
    "write_dataset",
]

__version__ = "0.1.0"
