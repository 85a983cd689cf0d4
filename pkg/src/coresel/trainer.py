"""Desk-scale proxy trainer.

A multinomial logistic regression (``linear``) or one-hidden-layer relu MLP
(``mlp1``) trained with mini-batch SGD: momentum, weight decay, optional
cosine learning-rate decay, per-sample loss weights. Parameters live in
float64 and training is single-threaded, so a (arch, data, config, seed)
tuple reproduces bitwise-identical models. Randomness is drawn from the
named Philox streams in :mod:`coresel.rng` (init / shuffle / data-gen).

The trainer is the metric-extraction model for the score-based methods: it
records per-epoch correctness plus a softmax/loss/error-vector/penultimate
snapshot at a reference epoch, and it evaluates coresets by retraining from
scratch on the weighted subset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifact import (
    CoresetResult,
    DatasetArtifact,
    FeatureMatrix,
    LabelVector,
    TrainingTrace,
)
from .errors import ArtifactValidationError, NumericalError
from .rng import STREAM_DATAGEN, STREAM_INIT, STREAM_SHUFFLE, stream

ARCHS = ("linear", "mlp1")
LR_SCHEDULES = ("constant", "cosine")

_P_FLOOR = 1e-30  # loss floor only; softmax itself is exact


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    lr_schedule: str = "cosine"

    def validate(self) -> None:
        if self.epochs < 1:
            raise ArtifactValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ArtifactValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ArtifactValidationError(f"lr must be >= 0, got {self.lr}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ArtifactValidationError(f"unknown lr_schedule {self.lr_schedule!r}")


@dataclass
class SyntheticSpec:
    """Gaussian class clusters at seeded random directions."""

    n_per_class: int
    num_classes: int
    dim: int
    cluster_separation: float
    noise_sigma: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_per_class, self.num_classes, self.dim) < 1:
            raise ArtifactValidationError("n_per_class, num_classes and dim must be positive")
        if self.num_classes < 2:
            raise ArtifactValidationError("num_classes must be >= 2")
        if self.cluster_separation < 0 or self.noise_sigma < 0:
            raise ArtifactValidationError("separation and noise_sigma must be >= 0")


class ProxyModel:
    """Linear or one-hidden-layer classifier with explicit float64 weights."""

    def __init__(self, arch: str, w1, b1, w2, b2, seed: int):
        self.arch = arch
        self.w1 = w1  # (hidden, d) or None
        self.b1 = b1
        self.w2 = np.asarray(w2, dtype=np.float64)  # (C, h)
        self.b2 = np.asarray(b2, dtype=np.float64)  # (C,)
        self.seed = seed
        self.epoch_losses: list[float] = []
        self.epoch_accuracies: list[float] = []

    @property
    def num_classes(self) -> int:
        return self.w2.shape[0]

    @property
    def penultimate_width(self) -> int:
        return self.w2.shape[1]

    def penultimate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.arch == "linear":
            return x
        return np.maximum(x @ self.w1.T + self.b1, 0.0)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.penultimate(x) @ self.w2.T + self.b2

    def softmax(self, x: np.ndarray) -> np.ndarray:
        z = self.logits(x)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        return p

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(x) == np.asarray(y)))

    def input_jacobian(self, x_row: np.ndarray) -> np.ndarray:
        """d logits / d input for a single sample, shape (C, d)."""
        if self.arch == "linear":
            return self.w2.copy()
        x_row = np.asarray(x_row, dtype=np.float64)
        pre = self.w1 @ x_row + self.b1
        active = (pre > 0).astype(np.float64)
        return (self.w2 * active[None, :]) @ self.w1


def _as_xy(features, labels):
    x = features.data if isinstance(features, FeatureMatrix) else np.asarray(features)
    x = np.asarray(x, dtype=np.float64)
    if isinstance(labels, LabelVector):
        y, c = labels.labels, labels.num_classes
    else:
        y = np.asarray(labels, dtype=np.int64)
        c = int(y.max()) + 1 if y.size else 0
    return x, np.asarray(y, dtype=np.int64), c


def _init_params(arch: str, d: int, c: int, hidden: int, seed: int):
    rng = stream(seed, STREAM_INIT)
    if arch == "linear":
        w1 = b1 = None
        h = d
    else:
        w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(hidden, d))
        b1 = np.zeros(hidden)
        h = hidden
    w2 = rng.normal(0.0, 1.0 / np.sqrt(h), size=(c, h))
    b2 = np.zeros(c)
    return w1, b1, w2, b2


def _normalized_weights(weights, n: int) -> np.ndarray | None:
    if weights is None:
        return None
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ArtifactValidationError(f"weights must have shape ({n},), got {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ArtifactValidationError("weights must be finite and >= 0")
    total = w.sum()
    if total <= 0:
        raise ArtifactValidationError("weights sum to zero")
    return w * (n / total)  # mean 1 over the training set


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    if cfg.lr_schedule == "constant":
        return cfg.lr
    return cfg.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / cfg.epochs))


def _forward_stats(model: ProxyModel, x, y):
    p = model.softmax(x)
    losses = -np.log(np.maximum(p[np.arange(len(y)), y], _P_FLOOR))
    return p, losses


def train(arch: str, features, labels, weights=None,
          cfg: TrainConfig | None = None, hidden: int = 32,
          epoch_hook=None) -> ProxyModel:
    """Mini-batch SGD on weighted cross-entropy.

    ``weights`` (optional, one per sample, >= 0) are normalized to mean 1 so
    uniform weights reproduce the unweighted trajectory exactly.
    ``epoch_hook(model, epoch)`` runs after each epoch's updates (used for
    correctness logging and reference-epoch snapshots).
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if arch not in ARCHS:
        raise ArtifactValidationError(f"unknown arch {arch!r}")
    x, y, c = _as_xy(features, labels)
    n, d = x.shape
    if c < 2:
        raise ArtifactValidationError("training requires at least 2 classes")
    w_norm = _normalized_weights(weights, n)

    w1, b1, w2, b2 = _init_params(arch, d, c, hidden, cfg.seed)
    model = ProxyModel(arch, w1, b1, w2, b2, cfg.seed)
    vel = {
        "w2": np.zeros_like(model.w2),
        "b2": np.zeros_like(model.b2),
    }
    if arch == "mlp1":
        vel["w1"] = np.zeros_like(model.w1)
        vel["b1"] = np.zeros_like(model.b1)

    shuffle_rng = stream(cfg.seed, STREAM_SHUFFLE)
    onehot = np.eye(c)[y]

    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            xb, yb = x[batch], onehot[batch]
            hb = model.penultimate(xb)
            zb = hb @ model.w2.T + model.b2
            zb -= zb.max(axis=1, keepdims=True)
            pb = np.exp(zb)
            pb /= pb.sum(axis=1, keepdims=True)
            loss = -np.sum(yb * np.log(np.maximum(pb, _P_FLOOR))) / len(batch)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size}"
                )
            dz = pb - yb
            if w_norm is not None:
                dz = dz * w_norm[batch][:, None]
            dz /= len(batch)

            grads = {"w2": dz.T @ hb, "b2": dz.sum(axis=0)}
            if arch == "mlp1":
                dh = dz @ model.w2
                dh[hb <= 0] = 0.0
                grads["w1"] = dh.T @ xb
                grads["b1"] = dh.sum(axis=0)

            for name, grad in grads.items():
                param = getattr(model, name)
                vel[name] = cfg.momentum * vel[name] + grad + cfg.weight_decay * param
                param -= lr * vel[name]

        p_all, losses = _forward_stats(model, x, y)
        model.epoch_losses.append(float(losses.mean()))
        model.epoch_accuracies.append(float(np.mean(np.argmax(p_all, axis=1) == y)))
        if epoch_hook is not None:
            epoch_hook(model, epoch + 1)
    return model


def analytic_gradients(model: ProxyModel, x, y, weights=None):
    """Full-batch cross-entropy gradients (no weight decay), for testing."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    onehot = np.eye(model.num_classes)[y]
    h = model.penultimate(x)
    z = h @ model.w2.T + model.b2
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    dz = p - onehot
    w_norm = _normalized_weights(weights, n)
    if w_norm is not None:
        dz = dz * w_norm[:, None]
    dz /= n
    grads = {"w2": dz.T @ h, "b2": dz.sum(axis=0)}
    if model.arch == "mlp1":
        dh = dz @ model.w2
        dh[h <= 0] = 0.0
        grads["w1"] = dh.T @ x
        grads["b1"] = dh.sum(axis=0)
    return grads


def cross_entropy_loss(model: ProxyModel, x, y, weights=None) -> float:
    """Mean (weighted) cross-entropy over the set, matching analytic_gradients."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _, losses = _forward_stats(model, x, y)
    w_norm = _normalized_weights(weights, len(y))
    if w_norm is not None:
        losses = losses * w_norm
    return float(losses.mean())


def generate_synthetic(spec: SyntheticSpec):
    """Sample C Gaussian clusters and split them 80/20 into train and test.

    Cluster means are random unit directions scaled to ``cluster_separation``;
    noise is isotropic with ``noise_sigma``. Samples are generated class-
    interleaved and every fifth sample (by generation order) goes to the test
    split, so the split is deterministic given the seed.
    """
    spec.validate()
    rng = stream(spec.seed, STREAM_DATAGEN)
    dirs = rng.normal(size=(spec.num_classes, spec.dim))
    norms = np.linalg.norm(dirs, axis=1)
    norms[norms == 0] = 1.0
    means = dirs / norms[:, None] * spec.cluster_separation

    total = spec.n_per_class * spec.num_classes
    feats = np.empty((total, spec.dim), dtype=np.float64)
    labels = np.empty(total, dtype=np.int32)
    idx = 0
    for i in range(spec.n_per_class):
        for c in range(spec.num_classes):
            feats[idx] = means[c] + spec.noise_sigma * rng.normal(size=spec.dim)
            labels[idx] = c
            idx += 1

    is_test = (np.arange(total) % 5) == 4
    def pack(mask):
        return (FeatureMatrix(feats[mask]),
                LabelVector(labels[mask], spec.num_classes))
    train_f, train_l = pack(~is_test)
    test_f, test_l = pack(is_test)
    return train_f, train_l, test_f, test_l


def holdout_split(features, labels, val_fraction: float):
    """Deterministic held-out split: every round(1/val_fraction)-th sample.

    Returns (train_features, train_labels, val_features, val_labels,
    train_positions), where train_positions maps split-local indices back to
    the original rows.
    """
    if not 0 < val_fraction < 1:
        raise ArtifactValidationError(f"val_fraction {val_fraction} outside (0, 1)")
    x, y, _ = _as_xy(features, labels)
    c = labels.num_classes if isinstance(labels, LabelVector) else int(y.max()) + 1
    stride = max(2, round(1.0 / val_fraction))
    is_val = (np.arange(len(y)) % stride) == (stride - 1)
    if not np.any(is_val) or np.all(is_val):
        raise ArtifactValidationError("val_fraction leaves one side of the split empty")
    return (
        FeatureMatrix(x[~is_val]),
        LabelVector(y[~is_val], c),
        FeatureMatrix(x[is_val]),
        LabelVector(y[is_val], c),
        np.flatnonzero(~is_val),
    )


def record_trace(arch: str, features, labels, cfg: TrainConfig,
                 reference_epoch: int, hidden: int = 32) -> TrainingTrace:
    """Train and log per-epoch correctness plus a reference-epoch snapshot."""
    trace, _ = _record(arch, features, labels, cfg, reference_epoch, hidden, None, None)
    return trace


def record_trace_with_validation(arch: str, features, labels, val_features, val_labels,
                                 cfg: TrainConfig, reference_epoch: int,
                                 hidden: int = 32):
    """Like :func:`record_trace` but also snapshots a held-out split."""
    return _record(arch, features, labels, cfg, reference_epoch, hidden,
                   val_features, val_labels)


def _snapshot(model: ProxyModel, x, y) -> dict:
    # error_vectors derive from the stored float32 softmax so the
    # softmax - onehot consistency invariant holds exactly on disk
    p, losses = _forward_stats(model, x, y)
    softmax32 = p.astype(np.float32)
    onehot = np.eye(model.num_classes, dtype=np.float32)[y]
    return {
        "softmax": softmax32,
        "losses": losses.astype(np.float32),
        "error_vectors": softmax32 - onehot,
        "penultimate": model.penultimate(x).astype(np.float32),
    }


def _record(arch, features, labels, cfg, reference_epoch, hidden,
            val_features, val_labels):
    cfg = cfg or TrainConfig()
    cfg.validate()
    if not 1 <= reference_epoch <= cfg.epochs:
        raise ArtifactValidationError(
            f"reference_epoch {reference_epoch} outside [1, {cfg.epochs}]"
        )
    x, y, _ = _as_xy(features, labels)
    has_val = val_features is not None
    if has_val:
        xv, yv, _ = _as_xy(val_features, val_labels)

    rows: list[np.ndarray] = []
    val_rows: list[np.ndarray] = []
    snap: dict = {}
    val_snap: dict = {}

    def hook(model: ProxyModel, epoch: int) -> None:
        rows.append((model.predict(x) == y).astype(np.uint8))
        if has_val:
            val_rows.append((model.predict(xv) == yv).astype(np.uint8))
        if epoch == reference_epoch:
            snap.update(_snapshot(model, x, y))
            if has_val:
                val_snap.update(_snapshot(model, xv, yv))

    train(arch, features, labels, None, cfg, hidden, epoch_hook=hook)

    def build(rows_, snap_):
        return TrainingTrace(
            correctness=np.stack(rows_, axis=0),
            reference_epoch=reference_epoch,
            num_epochs=cfg.epochs,
            **snap_,
        )

    return build(rows, snap), (build(val_rows, val_snap) if has_val else None)


def evaluate_coreset(result: CoresetResult, train_features, train_labels,
                     test_features, test_labels, cfg: TrainConfig,
                     arch: str = "mlp1", hidden: int = 32) -> float:
    """Retrain from scratch on the weighted subset; return test accuracy."""
    x, y, _ = _as_xy(train_features, train_labels)
    result.validate(n=len(y))
    labels = train_labels if isinstance(train_labels, LabelVector) else LabelVector(
        y, int(y.max()) + 1
    )
    sub_feats = x[result.indices]
    sub_labels = LabelVector(labels.labels[result.indices], labels.num_classes)
    weights = result.weights.astype(np.float64)
    model = train(arch, sub_feats, sub_labels, weights, cfg, hidden)
    xt, yt, _ = _as_xy(test_features, test_labels)
    return model.accuracy(xt, yt)


def evaluate_on_artifact(result: CoresetResult, artifact: DatasetArtifact,
                         test_features, test_labels, cfg: TrainConfig,
                         arch: str = "mlp1", hidden: int = 32) -> float:
    return evaluate_coreset(result, artifact.features, artifact.labels,
                            test_features, test_labels, cfg, arch, hidden)


def load_csv(path) -> tuple[FeatureMatrix, LabelVector]:
    """Numeric CSV with the final column as an integer label; header optional."""
    rows: list[list[str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.reader(fh):
            if record and any(cell.strip() for cell in record):
                rows.append([cell.strip() for cell in record])
    if not rows:
        raise ArtifactValidationError(f"{Path(path).name}: empty CSV")
    try:
        [float(cell) for cell in rows[0]]
    except ValueError:
        rows = rows[1:]  # header line
        if not rows:
            raise ArtifactValidationError(f"{Path(path).name}: CSV has only a header")
    try:
        data = np.asarray([[float(cell) for cell in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise ArtifactValidationError(f"{Path(path).name}: non-numeric cell: {exc}") from exc
    if data.ndim != 2 or data.shape[1] < 2:
        raise ArtifactValidationError(f"{Path(path).name}: need at least one feature column plus labels")
    labels = data[:, -1]
    if np.any(labels != np.round(labels)):
        raise ArtifactValidationError(f"{Path(path).name}: final column must hold integer labels")
    y = labels.astype(np.int32)
    if y.min() < 0:
        raise ArtifactValidationError(f"{Path(path).name}: labels must be >= 0")
    return FeatureMatrix(data[:, :-1]), LabelVector(y, int(y.max()) + 1)
