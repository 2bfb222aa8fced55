"""Checkpoint persistence: one JSON document, weights as base64 arrays."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError
from ..features import NormStats
from .network import ArchitectureConfig, Model

CHECKPOINT_FORMAT = "remgen-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelCheckpoint:
    """A loaded checkpoint: model plus the statistics inference needs."""

    model: Model
    norm_stats: NormStats
    target_mean: float = 0.0
    target_std: float = 1.0
    train_meta: dict = field(default_factory=dict)

    def predict_delta(self, images, feats):
        """Correction in dB for normalized inputs (undoes target scaling)."""
        out = self.model.forward(images, feats, training=False)
        return out.astype(np.float64) * self.target_std + self.target_mean


def _encode(arr):
    a = np.ascontiguousarray(arr, dtype="<f4")
    return {"shape": list(arr.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(doc, name):
    try:
        raw = base64.b64decode(doc["data"], validate=True)
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float32)
        return arr.reshape(doc["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"weight {name!r}: undecodable payload ({exc})") from exc


def save_checkpoint(model: Model, norm_stats: NormStats, train_meta: dict, path,
                    target_mean=0.0, target_std=1.0):
    weights = {name: _encode(arr) for name, arr in model.params().items()}
    weights.update({name: _encode(arr) for name, arr in model.state().items()})
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": model.arch.to_dict(),
        "norm_stats": {
            "mean": norm_stats.mean.tolist(),
            "std": norm_stats.std.tolist(),
            "degenerate": [bool(x) for x in norm_stats.degenerate],
        },
        "target_stats": {"mean": float(target_mean), "std": float(target_std)},
        "train_meta": train_meta,
        "weights": weights,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> ModelCheckpoint:
    """Load a checkpoint; the restored model's forward output is
    bit-identical to the model that was saved."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, OSError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {doc.get('version')!r}")
    try:
        arch = ArchitectureConfig.from_dict(doc["architecture"])
        ns = doc["norm_stats"]
        norm_stats = NormStats(
            mean=np.asarray(ns["mean"], dtype=np.float64),
            std=np.asarray(ns["std"], dtype=np.float64),
            degenerate=np.asarray(ns["degenerate"], dtype=bool),
        )
        ts = doc.get("target_stats", {"mean": 0.0, "std": 1.0})
        meta = doc.get("train_meta", {})
        weights = doc["weights"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc

    model = Model(arch, seed=0, dtype=np.float32)
    targets = dict(model.params())
    targets.update(model.state())
    missing = sorted(set(targets) - set(weights))
    extra = sorted(set(weights) - set(targets))
    if missing or extra:
        raise CheckpointError(
            f"{path}: weights do not match architecture "
            f"(missing {missing[:3]}, unexpected {extra[:3]})")
    for name, arr in targets.items():
        loaded = _decode(weights[name], name)
        if loaded.shape != arr.shape:
            raise CheckpointError(
                f"{path}: weight {name!r} has shape {loaded.shape}, expected {arr.shape}")
        arr[...] = loaded
    return ModelCheckpoint(model=model, norm_stats=norm_stats,
                           target_mean=float(ts["mean"]), target_std=float(ts["std"]),
                           train_meta=meta)
