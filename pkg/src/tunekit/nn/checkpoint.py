"""Self-describing binary checkpoints.

Layout (all little-endian): magic "TKCK", uint32 version, uint32 header
length, UTF-8 JSON header, then raw float32 tensor data in header order.
The header records the model kind, its config and each tensor's name and
shape, so a checkpoint loads without out-of-band knowledge.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .layers import Classifier, ClassifierConfig, Embedder, EmbedderConfig

_MAGIC = b"TKCK"
_VERSION = 1


def _write(path: Path, kind: str, config, names: list[str], tensors: list[np.ndarray]) -> None:
    header = {
        "kind": kind,
        "config": dataclasses.asdict(config),
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in zip(names, tensors)],
        "dtype": "<f4",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for t in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def _read(path: Path) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a tunekit checkpoint")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        tensors = []
        for entry in header["tensors"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            data = np.frombuffer(fh.read(count * 4), dtype="<f4").reshape(entry["shape"])
            tensors.append(data.copy())
    return header, tensors


def _tuplify(config_dict: dict) -> dict:
    out = {}
    for key, value in config_dict.items():
        if isinstance(value, list):
            out[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            out[key] = value
    return out


def save_embedder(model: Embedder, path: str | Path) -> None:
    _write(Path(path), "embedder", model.config, model.param_names(), [p.data for p in model.params()])


def load_embedder(path: str | Path) -> Embedder:
    header, tensors = _read(Path(path))
    if header["kind"] != "embedder":
        raise ValueError(f"{path}: checkpoint holds a {header['kind']}, not an embedder")
    config = EmbedderConfig(**_tuplify(header["config"]))
    model = Embedder(config)
    for p, data in zip(model.params(), tensors):
        if p.data.shape != data.shape:
            raise ValueError(f"{path}: tensor shape mismatch {p.data.shape} vs {data.shape}")
        p.data = data.astype(model.dtype)
    return model


def save_classifier(model: Classifier, path: str | Path) -> None:
    _write(Path(path), "classifier", model.config, model.param_names(), [p.data for p in model.params()])


def load_classifier(path: str | Path) -> Classifier:
    header, tensors = _read(Path(path))
    if header["kind"] != "classifier":
        raise ValueError(f"{path}: checkpoint holds a {header['kind']}, not a classifier")
    config = ClassifierConfig(**_tuplify(header["config"]))
    model = Classifier(config)
    for p, data in zip(model.params(), tensors):
        p.data = data.astype(model.dtype)
    return model


def checkpoint_hash(path: str | Path) -> str:
    """SHA-256 of the checkpoint bytes, for determinism reports."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
