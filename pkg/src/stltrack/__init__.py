"""Selective tracklet learning: unsupervised tracklet embedding with
per-camera selective matching and cross-camera association."""

__version__ = "0.1.0"

from .core import DatasetError, TrackletDataset, load_dataset, save_dataset
from .embed import EmbedModel, forward, load_checkpoint, save_checkpoint
from .estimator import TrackletEmbedder
from .evaluation import evaluate_retrieval, run_ablation
from .synthgen import GenConfig, generate
from .trainer import TrainConfig, TrainingError, run_training

__all__ = [
    "DatasetError",
    "TrackletDataset",
    "load_dataset",
    "save_dataset",
    "EmbedModel",
    "forward",
    "load_checkpoint",
    "save_checkpoint",
    "TrackletEmbedder",
    "evaluate_retrieval",
    "run_ablation",
    "GenConfig",
    "generate",
    "TrainConfig",
    "TrainingError",
    "run_training",
]
