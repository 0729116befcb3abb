"""Optimizer and the two-stage training loops.

Stage one trains the embedder on mined semi-hard triplets; stage two
trains the classifier on frozen embeddings with binary cross-entropy.
Both retain the best model by validation loss and stop early after
``patience`` non-improving evaluations.  Everything is deterministic for
a fixed seed.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .layers import Classifier, ClassifierConfig, Embedder, EmbedderConfig
from .losses import bce_loss, mine_semi_hard, triplet_loss
from .tensor import Tensor, take_rows

logger = logging.getLogger(__name__)


class Adam:
    """Adaptive-moment estimation with the usual (0.9, 0.999, 1e-8)."""

    def __init__(self, params: list[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            m_hat = self.m[i] / (1 - self.b1**self.t)
            v_hat = self.v[i] / (1 - self.b2**self.t)
            p.data = p.data - (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def _snapshot(params: list[Tensor]) -> list[np.ndarray]:
    return [p.data.copy() for p in params]


def _restore(params: list[Tensor], snapshot: list[np.ndarray]):
    for p, data in zip(params, snapshot):
        p.data = data.copy()


def _balanced_batches(
    labels: np.ndarray, batch_size: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Class-interleaved batches so every batch sees >= 2 classes.

    Each class pool is shuffled and tiled up to the largest pool, then the
    pools are interleaved and cut into batches.
    """
    classes = np.unique(labels)
    pools = []
    longest = 0
    for c in classes:
        idx = np.where(labels == c)[0]
        rng.shuffle(idx)
        pools.append(idx)
        longest = max(longest, len(idx))
    tiled = [np.resize(pool, longest) for pool in pools]
    interleaved = np.stack(tiled, axis=1).reshape(-1)
    n_batches = max(1, int(np.ceil(len(interleaved) / batch_size)))
    return [batch for batch in np.array_split(interleaved, n_batches) if len(batch) >= 4]


def _spec_batch(data: np.ndarray, idx: np.ndarray, dtype) -> Tensor:
    return Tensor(data[idx][:, None, :, :].astype(dtype))


def _embedder_epoch_loss(
    model: Embedder, data: np.ndarray, labels: np.ndarray, batches: list[np.ndarray]
) -> float:
    losses, weights = [], []
    for idx in batches:
        emb = model.forward(_spec_batch(data, idx, model.dtype))
        triplets = mine_semi_hard(emb.data, labels[idx], model.config.margin)
        if not triplets:
            continue
        t = np.asarray(triplets)
        loss = triplet_loss(
            take_rows(emb, t[:, 0]), take_rows(emb, t[:, 1]), take_rows(emb, t[:, 2]),
            model.config.margin,
        )
        losses.append(loss.item())
        weights.append(len(triplets))
    if not losses:
        return 0.0
    return float(np.average(losses, weights=weights))


def train_embedder(
    train_data: np.ndarray,
    train_labels: np.ndarray,
    config: EmbedderConfig,
    val_data: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> tuple[Embedder, list[dict]]:
    """Mini-batch triplet training with semi-hard mining.

    ``train_data`` is (N, H, W) spectrogram values with integer class
    labels.  Returns the best-validation model and a per-epoch history.
    """
    train_labels = np.asarray(train_labels)
    if len(np.unique(train_labels)) < 2:
        raise ValueError("embedder training needs at least two classes")
    if val_data is None:
        val_data, val_labels = train_data, train_labels
    val_labels = np.asarray(val_labels)

    model = Embedder(config)
    params = model.params()
    optimizer = Adam(params, config.learning_rate)
    rng = np.random.default_rng(config.seed)

    val_batches = _balanced_batches(val_labels, config.batch_size, np.random.default_rng(config.seed))
    history: list[dict] = []
    best_val = np.inf
    best_params = _snapshot(params)
    stale = 0

    for epoch in range(config.max_epochs):
        batches = _balanced_batches(train_labels, config.batch_size, rng)
        epoch_losses, epoch_weights = [], []
        for idx in batches:
            optimizer.zero_grad()
            emb = model.forward(_spec_batch(train_data, idx, model.dtype))
            triplets = mine_semi_hard(emb.data, train_labels[idx], config.margin)
            if not triplets:
                continue
            t = np.asarray(triplets)
            loss = triplet_loss(
                take_rows(emb, t[:, 0]), take_rows(emb, t[:, 1]), take_rows(emb, t[:, 2]),
                config.margin,
            )
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss.item())
            epoch_weights.append(len(triplets))

        train_loss = float(np.average(epoch_losses, weights=epoch_weights)) if epoch_losses else 0.0
        val_loss = _embedder_epoch_loss(model, val_data, val_labels, val_batches)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        logger.info("embedder epoch %d: train %.4f val %.4f", epoch, train_loss, val_loss)

        if val_loss < best_val - 1e-6:
            best_val = val_loss
            best_params = _snapshot(params)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("embedder early stop at epoch %d", epoch)
                break

    _restore(params, best_params)
    return model, history


def train_classifier(
    train_features: np.ndarray,
    train_labels: np.ndarray,
    config: ClassifierConfig,
    val_features: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> tuple[Classifier, list[dict]]:
    """BCE training on (frozen) embedding vectors with 0/1 labels."""
    train_labels = np.asarray(train_labels, dtype=np.float64)
    if len(np.unique(train_labels)) < 2:
        raise ValueError("classifier training needs both labels present")
    if val_features is None:
        val_features, val_labels = train_features, train_labels
    val_labels = np.asarray(val_labels, dtype=np.float64)

    model = Classifier(config)
    params = model.params()
    optimizer = Adam(params, config.learning_rate)
    rng = np.random.default_rng(config.seed)

    history: list[dict] = []
    best_val = np.inf
    best_params = _snapshot(params)
    stale = 0
    n = len(train_labels)

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            optimizer.zero_grad()
            y = model.forward(Tensor(train_features[idx].astype(model.dtype)))
            loss = bce_loss(y, train_labels[idx])
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss.item())

        y_val = model.forward(Tensor(val_features.astype(model.dtype)))
        val_loss = bce_loss(y_val, val_labels).item()
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), "val_loss": val_loss}
        )

        if val_loss < best_val - 1e-8:
            best_val = val_loss
            best_params = _snapshot(params)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("classifier early stop at epoch %d", epoch)
                break

    _restore(params, best_params)
    return model, history


def embed(model: Embedder, mel_values: np.ndarray) -> np.ndarray:
    """Embedding vector for one spectrogram values matrix."""
    mel_values = np.asarray(mel_values)
    if mel_values.shape != model.config.input_shape:
        raise ValueError(f"mel is {mel_values.shape}, model expects {model.config.input_shape}")
    out = model.forward(Tensor(mel_values[None, None, :, :].astype(model.dtype)))
    return out.data[0].astype(np.float64)


def embed_batch(model: Embedder, mels: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Embeddings for an (N, H, W) stack, batched to bound memory."""
    outputs = []
    for start in range(0, len(mels), batch_size):
        chunk = mels[start : start + batch_size]
        out = model.forward(Tensor(chunk[:, None, :, :].astype(model.dtype)))
        outputs.append(out.data.astype(np.float64))
    return np.concatenate(outputs, axis=0)


def classify(model: Classifier, feature: np.ndarray) -> float:
    """Likelihood in (0, 1) for one embedding vector."""
    feature = np.asarray(feature)
    if feature.shape != (model.config.input_dim,):
        raise ValueError(f"feature is {feature.shape}, expected ({model.config.input_dim},)")
    return float(model.forward(Tensor(feature[None, :].astype(model.dtype))).data[0])


def save_history_csv(history: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row["epoch"], f"{row['train_loss']:.6f}", f"{row['val_loss']:.6f}"])
