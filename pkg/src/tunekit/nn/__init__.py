"""Minimal neural core: autodiff tensors, models, training, checkpoints."""

from .checkpoint import (
    checkpoint_hash,
    load_classifier,
    load_embedder,
    save_classifier,
    save_embedder,
)
from .gradcheck import grad_check
from .layers import Classifier, ClassifierConfig, Embedder, EmbedderConfig
from .losses import bce_loss, mine_semi_hard, squared_distances, triplet_loss
from .tensor import Tensor
from .training import (
    Adam,
    classify,
    embed,
    embed_batch,
    save_history_csv,
    train_classifier,
    train_embedder,
)

__all__ = [
    "Adam",
    "Classifier",
    "ClassifierConfig",
    "Embedder",
    "EmbedderConfig",
    "Tensor",
    "bce_loss",
    "checkpoint_hash",
    "classify",
    "embed",
    "embed_batch",
    "grad_check",
    "load_classifier",
    "load_embedder",
    "mine_semi_hard",
    "save_classifier",
    "save_embedder",
    "save_history_csv",
    "squared_distances",
    "train_classifier",
    "train_embedder",
    "triplet_loss",
]
