"""Multinomial logistic regression over texture features.

Training is mini-batch gradient descent on mean cross-entropy plus an L2
penalty (l2/2)*||W||^2, from zero-initialized weights, with a seeded
shuffle each epoch; identical dataset, config, seed, and clock give
identical model bytes.

Features are standardized internally (per-dimension mean/std over the
training set) and the learned parameters are folded back into raw-feature
space afterwards, so saved models apply directly to raw vectors:
W = W'/sigma and b = b' - sum(W'*mu/sigma) give identical logits.

Model file layout, all integers little-endian:

    bytes 0..3   magic "XYLM"
    bytes 4..5   u16 container format version (currently 1)
    bytes 6..9   u32 header length H
    10 .. 10+H   canonical JSON header (sorted keys): version, trained_at,
                 class_ids, feature_spec, train_metrics, c, d
    then         c*d float64 weights (row-major), c float64 biases
    last 4       u32 CRC32 over all preceding bytes
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .features import FeatureSpec, FeatureVector

MAGIC = b"XYLM"
CONTAINER_VERSION = 1
_HEADER_PREFIX = struct.Struct("<4sHI")


class TrainingError(ValueError):
    """Bad training inputs: empty class, unknown label, shape mismatch."""


class DivergenceError(TrainingError):
    """Non-finite loss during training; carries the offending epoch."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")
        self.epoch = epoch


class SpecMismatchError(ValueError):
    """Feature vector was produced under a different FeatureSpec."""


class ModelFormatError(ValueError):
    """Unreadable model file: bad magic, version, truncation, or checksum."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    l2: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise TrainingError("learning_rate must be positive")
        if self.epochs < 0:
            raise TrainingError("epochs must be >= 0")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.l2 < 0:
            raise TrainingError("l2 must be >= 0")


@dataclass
class ModelParams:
    weights: np.ndarray  # (C, D)
    biases: np.ndarray  # (C,)
    class_ids: tuple[str, ...]
    feature_spec: FeatureSpec
    version: str
    trained_at: datetime
    train_metrics: dict = field(default_factory=dict)

    @property
    def c(self) -> int:
        return len(self.class_ids)

    @property
    def d(self) -> int:
        return int(self.weights.shape[1])

    def validate(self) -> None:
        if self.c < 2:
            raise ValueError("need at least 2 classes")
        if len(set(self.class_ids)) != self.c:
            raise ValueError("duplicate class_ids")
        if self.weights.shape != (self.c, self.feature_spec.dim):
            raise ValueError(
                f"weights shape {self.weights.shape} does not match "
                f"{self.c} classes x {self.feature_spec.dim} features"
            )
        if self.biases.shape != (self.c,):
            raise ValueError(f"biases shape {self.biases.shape} != ({self.c},)")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("non-finite parameters")


@dataclass
class Prediction:
    """Full ranking over all classes, descending probability, probability
    ties broken by ascending class_id."""

    ranked: tuple[tuple[str, float], ...]
    model_version: str


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_matrix(batch: Sequence[tuple[FeatureVector, str]], class_ids: Sequence[str]):
    if not batch:
        raise TrainingError("empty batch")
    index = {cid: i for i, cid in enumerate(class_ids)}
    dims = {fv.values.shape[0] for fv, _ in batch}
    if len(dims) != 1:
        raise TrainingError(f"mixed feature dimensions in batch: {sorted(dims)}")
    for _, label in batch:
        if label not in index:
            raise TrainingError(f"unknown label: {label!r}")
    x = np.stack([fv.values for fv, _ in batch]).astype(np.float64)
    y = np.array([index[label] for _, label in batch], dtype=np.int64)
    return x, y


def _objective(w, b, x, y, l2):
    """Mean cross-entropy + (l2/2)||w||^2, with exact gradients."""
    n = x.shape[0]
    logits = x @ w.T + b
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float((log_norm - z[np.arange(n), y]).mean()) + 0.5 * l2 * float((w * w).sum())
    probs = np.exp(z - log_norm[:, None])
    g = probs
    g[np.arange(n), y] -= 1.0
    g /= n
    grad_w = g.T @ x + l2 * w
    grad_b = g.sum(axis=0)
    return loss, grad_w, grad_b


def loss_and_gradient(
    params: ModelParams,
    batch: Sequence[tuple[FeatureVector, str]],
    l2: float = 0.0,
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Objective and exact gradients at ``params`` for one batch."""
    x, y = _as_matrix(batch, params.class_ids)
    if x.shape[1] != params.d:
        raise TrainingError(f"feature dim {x.shape[1]} != model dim {params.d}")
    loss, grad_w, grad_b = _objective(params.weights, params.biases, x, y, l2)
    return loss, (grad_w, grad_b)


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


def train(
    dataset: Sequence[tuple[FeatureVector, str]],
    class_ids: Sequence[str],
    config: TrainConfig,
    feature_spec: FeatureSpec,
    version: str = "1",
    clock: Callable[[], datetime] = _utc_now,
) -> ModelParams:
    """Fit the classifier; deterministic for fixed inputs, seed, and clock.

    Every class in ``class_ids`` must appear at least once in ``dataset``,
    and every vector must carry the hash of ``feature_spec``.
    """
    config.validate()
    class_ids = tuple(class_ids)
    if len(class_ids) < 2:
        raise TrainingError("need at least 2 classes")
    if len(set(class_ids)) != len(class_ids):
        raise TrainingError("duplicate class_ids")
    expected_hash = feature_spec.spec_hash()
    for fv, _ in dataset:
        if fv.spec_hash != expected_hash:
            raise SpecMismatchError(
                f"vector spec_hash {fv.spec_hash} != training spec {expected_hash}"
            )
    x, y = _as_matrix(dataset, class_ids)
    if x.shape[1] != feature_spec.dim:
        raise TrainingError(
            f"feature dim {x.shape[1]} != spec dim {feature_spec.dim}"
        )
    counts = np.bincount(y, minlength=len(class_ids))
    if (counts == 0).any():
        missing = [class_ids[i] for i in np.flatnonzero(counts == 0)]
        raise TrainingError(f"no training examples for classes: {missing}")

    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    sigma = np.where(sigma < 1e-12, 1.0, sigma)
    xs = (x - mu) / sigma

    n, d = xs.shape
    c = len(class_ids)
    w = np.zeros((c, d), dtype=np.float64)
    b = np.zeros(c, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    loss_history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, grad_w, grad_b = _objective(w, b, xs[idx], y[idx], config.l2)
            w -= config.learning_rate * grad_w
            b -= config.learning_rate * grad_b
        epoch_loss, _, _ = _objective(w, b, xs, y, config.l2)
        if not np.isfinite(epoch_loss):
            raise DivergenceError(epoch)
        loss_history.append(epoch_loss)

    final_loss, _, _ = _objective(w, b, xs, y, config.l2)
    train_accuracy = float(((xs @ w.T + b).argmax(axis=1) == y).mean())

    folded_w = w / sigma
    folded_b = b - (w * (mu / sigma)).sum(axis=1)
    params = ModelParams(
        weights=folded_w,
        biases=folded_b,
        class_ids=class_ids,
        feature_spec=feature_spec,
        version=version,
        trained_at=clock(),
        train_metrics={
            "final_loss": final_loss,
            "train_accuracy": train_accuracy,
            "loss_history": loss_history,
            "epochs": config.epochs,
            "n_examples": n,
        },
    )
    params.validate()
    return params


def predict(params: ModelParams, fv: FeatureVector) -> Prediction:
    """Ranked softmax probabilities for one feature vector."""
    if fv.spec_hash != params.feature_spec.spec_hash():
        raise SpecMismatchError(
            f"vector spec_hash {fv.spec_hash} != model spec "
            f"{params.feature_spec.spec_hash()}"
        )
    if fv.values.shape != (params.d,):
        raise ValueError(f"feature shape {fv.values.shape} != ({params.d},)")
    logits = params.weights @ fv.values + params.biases
    probs = softmax(logits)
    order = sorted(range(params.c), key=lambda i: (-probs[i], params.class_ids[i]))
    ranked = tuple((params.class_ids[i], float(probs[i])) for i in order)
    return Prediction(ranked=ranked, model_version=params.version)


def top_k(pred: Prediction, k: int) -> tuple[tuple[str, float], ...]:
    """First k entries of the ranking; k must lie in [1, C]."""
    if not 1 <= k <= len(pred.ranked):
        raise ValueError(f"k must be in [1, {len(pred.ranked)}], got {k}")
    return pred.ranked[:k]


def _format_timestamp(dt: datetime) -> str:
    if dt.tzinfo is None:
        raise ValueError("trained_at must be timezone-aware")
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def dumps_model(params: ModelParams) -> bytes:
    params.validate()
    header = {
        "version": params.version,
        "trained_at": _format_timestamp(params.trained_at),
        "class_ids": list(params.class_ids),
        "feature_spec": params.feature_spec.to_dict(),
        "train_metrics": params.train_metrics,
        "c": params.c,
        "d": params.d,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray()
    body += _HEADER_PREFIX.pack(MAGIC, CONTAINER_VERSION, len(header_bytes))
    body += header_bytes
    body += np.ascontiguousarray(params.weights, dtype="<f8").tobytes()
    body += np.ascontiguousarray(params.biases, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    return bytes(body)


def save_model(params: ModelParams, destination: str | Path) -> int:
    """Write the model file; returns bytes written."""
    blob = dumps_model(params)
    Path(destination).write_bytes(blob)
    return len(blob)


def loads_model(blob: bytes) -> ModelParams:
    if len(blob) < _HEADER_PREFIX.size + 4:
        raise ModelFormatError("truncated model file")
    magic, fmt, header_len = _HEADER_PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    if fmt != CONTAINER_VERSION:
        raise ModelFormatError(f"unsupported container format version {fmt}")
    header_end = _HEADER_PREFIX.size + header_len
    if header_end + 4 > len(blob):
        raise ModelFormatError("truncated model file")
    try:
        header = json.loads(blob[_HEADER_PREFIX.size:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"unreadable header: {e}") from None
    if "version" not in header:
        raise ModelFormatError("header missing version field")
    for key in ("trained_at", "class_ids", "feature_spec", "c", "d"):
        if key not in header:
            raise ModelFormatError(f"header missing {key} field")
    c, d = int(header["c"]), int(header["d"])
    expected = header_end + 8 * c * d + 8 * c + 4
    if len(blob) != expected:
        raise ModelFormatError(
            f"truncated model file: {len(blob)} bytes, expected {expected}"
        )
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise ModelFormatError("checksum mismatch")
    weights = np.frombuffer(
        blob, dtype="<f8", count=c * d, offset=header_end
    ).reshape(c, d).copy()
    biases = np.frombuffer(
        blob, dtype="<f8", count=c, offset=header_end + 8 * c * d
    ).copy()
    trained_at = datetime.strptime(
        header["trained_at"], "%Y-%m-%dT%H:%M:%SZ"
    ).replace(tzinfo=timezone.utc)
    params = ModelParams(
        weights=weights,
        biases=biases,
        class_ids=tuple(header["class_ids"]),
        feature_spec=FeatureSpec.from_dict(header["feature_spec"]),
        version=str(header["version"]),
        trained_at=trained_at,
        train_metrics=dict(header.get("train_metrics", {})),
    )
    params.validate()
    return params


def load_model(source: str | Path | bytes) -> ModelParams:
    """Read a model file from a path or raw bytes."""
    blob = source if isinstance(source, bytes) else Path(source).read_bytes()
    return loads_model(blob)
