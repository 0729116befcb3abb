"""Training loops, embed/classify contracts and checkpoint round trips."""

import numpy as np
import pytest

from tunekit.nn import (
    Classifier,
    ClassifierConfig,
    Embedder,
    EmbedderConfig,
    checkpoint_hash,
    classify,
    embed,
    embed_batch,
    load_classifier,
    load_embedder,
    save_classifier,
    save_embedder,
    save_history_csv,
    squared_distances,
    train_classifier,
    train_embedder,
)

TOY_CONFIG = EmbedderConfig(
    input_shape=(64, 32),
    conv_blocks=((8, 3, 1, 2), (16, 3, 1, 2)),
    embedding_dim=32,
    batch_size=16,
    max_epochs=25,
    seed=3,
)


def _toy_spec(cls: int, rng) -> np.ndarray:
    # Two synthetic "tones": a bright band at different mel rows per class.
    base = np.zeros((64, 32))
    row = 8 if cls == 0 else 20
    base[:, row - 1 : row + 2] = 1.0
    return np.clip(base + 0.15 * rng.standard_normal((64, 32)), 0.0, 1.0)


def _toy_dataset(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    data = np.stack([_toy_spec(i % 2, rng) for i in range(n)])
    labels = np.arange(n) % 2
    return data, labels


# ---------------------------------------------------------------------------
# embed / classify contracts
# ---------------------------------------------------------------------------


def test_embed_unit_norm_and_determinism():
    model = Embedder(TOY_CONFIG)
    rng = np.random.default_rng(1)
    mel = rng.uniform(0, 1, (64, 32))
    e1, e2 = embed(model, mel), embed(model, mel)
    assert abs(np.linalg.norm(e1) - 1.0) < 1e-5
    assert np.array_equal(e1, e2)


def test_embed_local_lipschitz_sanity():
    model = Embedder(TOY_CONFIG)
    rng = np.random.default_rng(2)
    mel = rng.uniform(0, 1, (64, 32))
    perturbed = mel + 1e-6 * rng.standard_normal((64, 32))
    dist = np.linalg.norm(embed(model, mel) - embed(model, perturbed))
    assert dist < 1e-3


def test_embed_rejects_wrong_shape():
    model = Embedder(TOY_CONFIG)
    with pytest.raises(ValueError):
        embed(model, np.zeros((10, 10)))


def test_classify_zero_model_is_half():
    model = Classifier(ClassifierConfig())
    for p in model.params():
        p.data = np.zeros_like(p.data)
    assert classify(model, np.random.default_rng(3).standard_normal(512)) == 0.5


def test_classify_open_interval():
    model = Classifier(ClassifierConfig())
    rng = np.random.default_rng(4)
    for _ in range(10):
        y = classify(model, 100.0 * rng.standard_normal(512))
        assert 0.0 < y < 1.0


def test_classify_monotone_in_output_bias():
    model = Classifier(ClassifierConfig(seed=5))
    f = np.random.default_rng(6).standard_normal(512)
    ys = []
    for bias in (-1.0, 0.0, 1.0):
        model.out.b.data = np.array([bias], dtype=model.dtype)
        ys.append(classify(model, f))
    assert ys[0] < ys[1] < ys[2]


def test_classify_rejects_wrong_dim():
    model = Classifier(ClassifierConfig())
    with pytest.raises(ValueError):
        classify(model, np.zeros(100))


# ---------------------------------------------------------------------------
# train_embedder
# ---------------------------------------------------------------------------


def test_train_embedder_separates_toy_classes():
    data, labels = _toy_dataset(64)
    model, history = train_embedder(data[:48], labels[:48], TOY_CONFIG, data[48:], labels[48:])
    emb = embed_batch(model, data[48:])
    dist = squared_distances(emb)
    same = np.equal.outer(labels[48:], labels[48:]) & ~np.eye(16, dtype=bool)
    assert dist[same].max() < dist[~np.equal.outer(labels[48:], labels[48:])].min()
    assert len(history) >= 1


def test_train_embedder_zero_lr_keeps_params():
    data, labels = _toy_dataset(32)
    config = EmbedderConfig(**{**TOY_CONFIG.__dict__, "learning_rate": 0.0, "max_epochs": 2})
    before = [p.data.copy() for p in Embedder(config).params()]
    model, _ = train_embedder(data, labels, config)
    for p, b in zip(model.params(), before):
        np.testing.assert_array_equal(p.data, b)


def test_train_embedder_zero_epochs_returns_init():
    data, labels = _toy_dataset(32)
    config = EmbedderConfig(**{**TOY_CONFIG.__dict__, "max_epochs": 0})
    model, history = train_embedder(data, labels, config)
    fresh = Embedder(config)
    for p, q in zip(model.params(), fresh.params()):
        np.testing.assert_array_equal(p.data, q.data)
    assert history == []


def test_train_embedder_loss_decreases_on_toy_data():
    data, labels = _toy_dataset(64)
    _, history = train_embedder(data[:48], labels[:48], TOY_CONFIG, data[48:], labels[48:])
    values = [h["val_loss"] for h in history]
    running_min = np.minimum.accumulate(values)
    assert np.all(np.diff(running_min) <= 0)
    assert min(values) < values[0] or values[0] == 0.0


def test_train_embedder_rejects_single_class():
    data, _ = _toy_dataset(16)
    with pytest.raises(ValueError):
        train_embedder(data, np.zeros(16, dtype=int), TOY_CONFIG)


def test_train_embedder_deterministic():
    data, labels = _toy_dataset(32)
    config = EmbedderConfig(**{**TOY_CONFIG.__dict__, "max_epochs": 3})
    m1, h1 = train_embedder(data, labels, config)
    m2, h2 = train_embedder(data, labels, config)
    assert h1 == h2
    for p, q in zip(m1.params(), m2.params()):
        np.testing.assert_array_equal(p.data, q.data)


# ---------------------------------------------------------------------------
# train_classifier
# ---------------------------------------------------------------------------


def _cluster_features(n_per_class: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    axis = np.zeros(512)
    axis[0] = 0.8
    pos = 0.1 * rng.standard_normal((n_per_class, 512)) + axis
    neg = 0.1 * rng.standard_normal((n_per_class, 512)) - axis
    feats = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(n_per_class), np.zeros(n_per_class)])
    order = rng.permutation(len(labels))  # keep any later split class-mixed
    return feats[order], labels[order]


CLS_CONFIG = ClassifierConfig(max_epochs=250, learning_rate=1e-3, seed=1)


def test_train_classifier_separable_clusters():
    feats, labels = _cluster_features(200)
    model, _ = train_classifier(feats[:300], labels[:300], CLS_CONFIG, feats[300:], labels[300:])
    preds = np.array([classify(model, f) for f in feats[300:]]) > 0.5
    assert (preds == labels[300:]).mean() >= 0.99


def test_train_classifier_label_flip_symmetry():
    feats, labels = _cluster_features(40, seed=2)
    model, _ = train_classifier(feats, labels, CLS_CONFIG)
    flipped, _ = train_classifier(feats, 1.0 - labels, CLS_CONFIG)
    acc = ((np.array([classify(model, f) for f in feats]) > 0.5) == labels).mean()
    acc_flip = ((np.array([classify(flipped, f) for f in feats]) > 0.5) == (1.0 - labels)).mean()
    assert acc_flip == pytest.approx(acc, abs=0.05)


def test_train_classifier_zero_epochs_returns_init():
    feats, labels = _cluster_features(10)
    config = ClassifierConfig(max_epochs=0, seed=7)
    model, history = train_classifier(feats, labels, config)
    fresh = Classifier(config)
    for p, q in zip(model.params(), fresh.params()):
        np.testing.assert_array_equal(p.data, q.data)
    assert history == []


def test_train_classifier_rejects_single_label():
    feats, _ = _cluster_features(10)
    with pytest.raises(ValueError):
        train_classifier(feats, np.ones(20), CLS_CONFIG)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_embedder_checkpoint_roundtrip(tmp_path):
    model = Embedder(TOY_CONFIG)
    path = tmp_path / "emb.ckpt"
    save_embedder(model, path)
    loaded = load_embedder(path)
    assert loaded.config == model.config
    mel = np.random.default_rng(8).uniform(0, 1, (64, 32))
    np.testing.assert_array_equal(embed(loaded, mel), embed(model, mel))


def test_classifier_checkpoint_roundtrip(tmp_path):
    model = Classifier(ClassifierConfig(seed=11))
    path = tmp_path / "cls.ckpt"
    save_classifier(model, path)
    loaded = load_classifier(path)
    f = np.random.default_rng(9).standard_normal(512)
    assert classify(loaded, f) == classify(model, f)


def test_checkpoint_hash_stable(tmp_path):
    model = Classifier(ClassifierConfig(seed=12))
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_classifier(model, p1)
    save_classifier(model, p2)
    assert checkpoint_hash(p1) == checkpoint_hash(p2)


def test_checkpoint_kind_mismatch(tmp_path):
    model = Classifier(ClassifierConfig())
    path = tmp_path / "cls.ckpt"
    save_classifier(model, path)
    with pytest.raises(ValueError):
        load_embedder(path)


def test_history_csv(tmp_path):
    history = [{"epoch": 0, "train_loss": 0.5, "val_loss": 0.6}]
    path = tmp_path / "hist.csv"
    save_history_csv(history, path)
    assert path.read_text().splitlines()[0] == "epoch,train_loss,val_loss"
