"""Dataset artifact: typed tensors, invariant validation, on-disk layout.

An artifact directory holds ``manifest.json`` plus one DCTF file per tensor
(fixed names below). Floats are stored as float32; computations elsewhere
accumulate in float64. Artifacts are immutable after load: loaded arrays are
marked read-only and can be shared across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dctf import read_tensor, write_tensor
from .errors import ArtifactValidationError

MANIFEST_NAME = "manifest.json"
SCHEMA_VERSION = 1

SOFTMAX_SUM_TOL = 1e-4
ERROR_VECTOR_TOL = 1e-6

# field -> (file name, dtype) for the train split; validation uses val_ prefixes
_TRACE_FIELDS = ("correctness", "softmax", "losses", "error_vectors", "penultimate")
_FILES = {
    "features": ("features.dctf", "float32"),
    "labels": ("labels.dctf", "int32"),
    "correctness": ("correctness.dctf", "uint8"),
    "softmax": ("softmax.dctf", "float32"),
    "losses": ("losses.dctf", "float32"),
    "error_vectors": ("error_vectors.dctf", "float32"),
    "penultimate": ("penultimate.dctf", "float32"),
}


def _as_float32_matrix(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x), dtype=np.float32)


@dataclass
class FeatureMatrix:
    """n x d row-major float32 embedding coordinates."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_float32_matrix(self.data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def validate(self, where: str = "features") -> None:
        if self.data.ndim != 2:
            raise ArtifactValidationError(f"{where}: expected rank 2, got {self.data.ndim}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ArtifactValidationError(f"{where}: need n >= 1 and d >= 1, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            bad = int(np.argwhere(~np.isfinite(self.data))[0][0])
            raise ArtifactValidationError(f"{where}: non-finite entry in row {bad}")


@dataclass
class LabelVector:
    """Integer class labels in [0, num_classes)."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.labels = np.ascontiguousarray(np.asarray(self.labels), dtype=np.int32)
        self.num_classes = int(self.num_classes)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def validate(self, n: int | None = None, where: str = "labels") -> None:
        if self.labels.ndim != 1:
            raise ArtifactValidationError(f"{where}: expected rank 1, got {self.labels.ndim}")
        if n is not None and self.labels.shape[0] != n:
            raise ArtifactValidationError(
                f"{where}: length {self.labels.shape[0]} disagrees with n={n}"
            )
        if self.num_classes < 2:
            raise ArtifactValidationError(f"{where}: num_classes must be >= 2, got {self.num_classes}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            bad = int(np.argwhere((self.labels < 0) | (self.labels >= self.num_classes))[0][0])
            raise ArtifactValidationError(
                f"{where}: label {int(self.labels[bad])} at row {bad} outside [0, {self.num_classes})"
            )


@dataclass
class TrainingTrace:
    """Per-sample model outputs recorded from a proxy training run.

    ``correctness`` is epoch-major (E x n) over every epoch; all other fields
    are snapshots taken at ``reference_epoch`` (1-based, counted after the
    epoch's update). ``error_vectors`` must equal ``softmax - onehot(labels)``
    and ``penultimate`` holds the features feeding the final linear layer.
    """

    correctness: np.ndarray
    softmax: np.ndarray
    losses: np.ndarray
    error_vectors: np.ndarray
    penultimate: np.ndarray
    reference_epoch: int
    num_epochs: int

    def __post_init__(self):
        self.correctness = np.ascontiguousarray(np.asarray(self.correctness), dtype=np.uint8)
        self.softmax = _as_float32_matrix(self.softmax)
        self.losses = np.ascontiguousarray(np.asarray(self.losses), dtype=np.float32)
        self.error_vectors = _as_float32_matrix(self.error_vectors)
        self.penultimate = _as_float32_matrix(self.penultimate)
        self.reference_epoch = int(self.reference_epoch)
        self.num_epochs = int(self.num_epochs)

    @property
    def n(self) -> int:
        return self.softmax.shape[0]

    @property
    def num_classes(self) -> int:
        return self.softmax.shape[1]

    @property
    def penultimate_width(self) -> int:
        return self.penultimate.shape[1]

    def validate(self, n: int, labels: LabelVector | None = None, where: str = "trace") -> None:
        E = self.num_epochs
        if E < 1:
            raise ArtifactValidationError(f"{where}: num_epochs must be >= 1, got {E}")
        if not 1 <= self.reference_epoch <= E:
            raise ArtifactValidationError(
                f"{where}: reference_epoch {self.reference_epoch} outside [1, {E}]"
            )
        if self.correctness.shape != (E, n):
            raise ArtifactValidationError(
                f"{where}.correctness: shape {self.correctness.shape} != ({E}, {n})"
            )
        if self.correctness.size and not np.all((self.correctness == 0) | (self.correctness == 1)):
            raise ArtifactValidationError(f"{where}.correctness: entries must be 0 or 1")
        if self.softmax.ndim != 2 or self.softmax.shape[0] != n:
            raise ArtifactValidationError(f"{where}.softmax: shape {self.softmax.shape} != ({n}, C)")
        if np.any(self.softmax < 0):
            bad = int(np.argwhere((self.softmax < 0).any(axis=1))[0][0])
            raise ArtifactValidationError(f"{where}.softmax: negative entry in row {bad}")
        sums = self.softmax.sum(axis=1, dtype=np.float64)
        off = np.abs(sums - 1.0)
        if np.any(off > SOFTMAX_SUM_TOL):
            bad = int(np.argmax(off))
            raise ArtifactValidationError(
                f"{where}: softmax row {bad} sums to {sums[bad]:.6g}"
            )
        if self.losses.shape != (n,):
            raise ArtifactValidationError(f"{where}.losses: shape {self.losses.shape} != ({n},)")
        if not np.all(np.isfinite(self.losses)) or np.any(self.losses < 0):
            raise ArtifactValidationError(f"{where}.losses: entries must be finite and >= 0")
        if self.error_vectors.shape != self.softmax.shape:
            raise ArtifactValidationError(
                f"{where}.error_vectors: shape {self.error_vectors.shape} != softmax shape"
            )
        if labels is not None:
            expected = self.softmax.astype(np.float64).copy()
            expected[np.arange(n), labels.labels] -= 1.0
            gap = np.abs(self.error_vectors.astype(np.float64) - expected).max(axis=1)
            if np.any(gap > ERROR_VECTOR_TOL):
                bad = int(np.argmax(gap))
                raise ArtifactValidationError(
                    f"{where}: error_vectors row {bad} differs from softmax - onehot "
                    f"by {gap[bad]:.3g}"
                )
        if self.penultimate.ndim != 2 or self.penultimate.shape[0] != n:
            raise ArtifactValidationError(
                f"{where}.penultimate: shape {self.penultimate.shape} != ({n}, h)"
            )
        if not np.all(np.isfinite(self.penultimate)):
            raise ArtifactValidationError(f"{where}.penultimate: non-finite entry")


@dataclass
class ValidationSplit:
    """Held-out samples plus trace, used by bilevel methods."""

    features: FeatureMatrix
    labels: LabelVector
    trace: TrainingTrace

    def validate(self) -> None:
        self.features.validate(where="val_features")
        self.labels.validate(self.features.n, where="val_labels")
        self.trace.validate(self.features.n, self.labels, where="val_trace")


@dataclass
class DatasetArtifact:
    """Everything one selection run needs: features, labels, optional traces."""

    features: FeatureMatrix
    labels: LabelVector
    trace: TrainingTrace | None = None
    validation: ValidationSplit | None = None

    @property
    def n(self) -> int:
        return self.features.n

    def validate(self) -> None:
        self.features.validate()
        self.labels.validate(self.features.n)
        if self.trace is not None:
            self.trace.validate(self.features.n, self.labels)
            if self.trace.num_classes != self.labels.num_classes:
                raise ArtifactValidationError(
                    f"trace.softmax: C={self.trace.num_classes} disagrees with "
                    f"labels C={self.labels.num_classes}"
                )
        if self.validation is not None:
            self.validation.validate()
            if self.validation.labels.num_classes != self.labels.num_classes:
                raise ArtifactValidationError("val_labels: num_classes disagrees with labels")


@dataclass
class CoresetResult:
    """Universal selection output: sorted indices plus per-sample weights.

    Uniform methods emit weight 1.0 for every index; weighted methods (CRAIG,
    gradient matching) store their raw weights. Consumers renormalize.
    """

    indices: np.ndarray
    weights: np.ndarray
    method: str
    fraction: float
    seed: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.indices = np.ascontiguousarray(np.asarray(self.indices), dtype=np.int64)
        self.weights = np.ascontiguousarray(np.asarray(self.weights), dtype=np.float32)

    def validate(self, n: int | None = None, budget: int | None = None) -> None:
        if self.indices.ndim != 1 or self.weights.shape != self.indices.shape:
            raise ArtifactValidationError("coreset: indices/weights must be 1-D and same length")
        if self.indices.size == 0:
            raise ArtifactValidationError("coreset: empty selection")
        if np.any(np.diff(self.indices) <= 0):
            raise ArtifactValidationError("coreset: indices must be strictly increasing")
        if self.indices[0] < 0 or (n is not None and self.indices[-1] >= n):
            raise ArtifactValidationError(f"coreset: index outside [0, {n})")
        if budget is not None and self.indices.size != budget:
            raise ArtifactValidationError(
                f"coreset: {self.indices.size} indices != budget {budget}"
            )
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ArtifactValidationError("coreset: weights must be finite and >= 0")
        if not 0 < self.fraction <= 1:
            raise ArtifactValidationError(f"coreset: fraction {self.fraction} outside (0, 1]")


def budget_from_fraction(n: int, fraction: float) -> int:
    """Selection budget k = round(fraction * n), clamped to [1, n].

    Rounding is Python's round-half-to-even; the clamp guarantees at least
    one sample even for tiny fractions.
    """
    if not 0 < fraction <= 1:
        raise ArtifactValidationError(f"fraction {fraction} outside (0, 1]")
    if n < 1:
        raise ArtifactValidationError(f"n must be >= 1, got {n}")
    return max(1, min(n, round(fraction * n)))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _tensor_entry(name: str, arr: np.ndarray, dtype: str) -> dict:
    return {"file": name, "dtype": dtype, "shape": list(arr.shape)}


def save_artifact(artifact: DatasetArtifact, path) -> None:
    """Validate and write ``artifact`` to directory ``path``.

    Re-saving the result of :func:`load_artifact` reproduces every tensor
    file byte for byte.
    """
    artifact.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    tensors: list[dict] = []

    def emit(key: str, arr: np.ndarray, prefix: str = "") -> None:
        name, dtype = _FILES[key]
        name = prefix + name
        write_tensor(root / name, arr)
        tensors.append(_tensor_entry(name, arr, dtype))

    emit("features", artifact.features.data)
    emit("labels", artifact.labels.labels)
    trace = artifact.trace
    if trace is not None:
        for key in _TRACE_FIELDS:
            emit(key, getattr(trace, key))
    if artifact.validation is not None:
        val = artifact.validation
        emit("features", val.features.data, "val_")
        emit("labels", val.labels.labels, "val_")
        for key in _TRACE_FIELDS:
            emit(key, getattr(val.trace, key), "val_")

    ref = trace if trace is not None else (
        artifact.validation.trace if artifact.validation is not None else None
    )
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "n": artifact.features.n,
        "d": artifact.features.d,
        "C": artifact.labels.num_classes,
        "h": ref.penultimate_width if ref is not None else None,
        "E": ref.num_epochs if ref is not None else None,
        "reference_epoch": ref.reference_epoch if ref is not None else None,
        "tensors": tensors,
    }
    (root / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _read_declared(root: Path, declared: dict, name: str) -> np.ndarray:
    entry = declared.get(name)
    if entry is None:
        raise ArtifactValidationError(f"{MANIFEST_NAME}: tensor {name} not declared")
    fpath = root / name
    if not fpath.is_file():
        raise ArtifactValidationError(f"{name}: declared in manifest but file is missing")
    arr = read_tensor(fpath)
    if list(arr.shape) != list(entry["shape"]):
        raise ArtifactValidationError(
            f"{name}: header shape {list(arr.shape)} disagrees with manifest "
            f"shape {entry['shape']}"
        )
    if arr.dtype.name != entry["dtype"]:
        raise ArtifactValidationError(
            f"{name}: dtype {arr.dtype.name} disagrees with manifest {entry['dtype']}"
        )
    return _freeze(arr)


def load_artifact(path) -> DatasetArtifact:
    """Load and fully validate the artifact stored in directory ``path``."""
    root = Path(path)
    mpath = root / MANIFEST_NAME
    if not mpath.is_file():
        raise ArtifactValidationError(f"{MANIFEST_NAME}: missing in {root}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ArtifactValidationError(f"{MANIFEST_NAME}: invalid JSON: {exc}") from exc

    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ArtifactValidationError(
            f"{MANIFEST_NAME}: schema_version {manifest.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}"
        )
    entries = manifest.get("tensors")
    if not isinstance(entries, list):
        raise ArtifactValidationError(f"{MANIFEST_NAME}: missing tensors list")
    declared: dict[str, dict] = {}
    for entry in entries:
        if not isinstance(entry, dict) or {"file", "dtype", "shape"} - entry.keys():
            raise ArtifactValidationError(f"{MANIFEST_NAME}: malformed tensor entry {entry!r}")
        declared[entry["file"]] = entry

    def load_split(prefix: str):
        fname = prefix + _FILES["features"][0]
        lname = prefix + _FILES["labels"][0]
        feats = FeatureMatrix(_read_declared(root, declared, fname))
        labels = LabelVector(_read_declared(root, declared, lname), manifest.get("C", 0))
        trace_names = [prefix + _FILES[k][0] for k in _TRACE_FIELDS]
        present = [name for name in trace_names if name in declared]
        if present and len(present) != len(trace_names):
            missing = sorted(set(trace_names) - set(present))
            raise ArtifactValidationError(
                f"{MANIFEST_NAME}: incomplete trace, missing {', '.join(missing)}"
            )
        trace = None
        if present:
            arrays = {k: _read_declared(root, declared, prefix + _FILES[k][0]) for k in _TRACE_FIELDS}
            for meta_key in ("E", "reference_epoch"):
                if not isinstance(manifest.get(meta_key), int):
                    raise ArtifactValidationError(
                        f"{MANIFEST_NAME}: {meta_key} must be an integer when a trace is present"
                    )
            trace = TrainingTrace(
                reference_epoch=manifest["reference_epoch"],
                num_epochs=manifest["E"],
                **arrays,
            )
            for arr_name, arr in (("correctness", trace.correctness),):
                if arr.shape[0] != manifest["E"]:
                    raise ArtifactValidationError(
                        f"{prefix}{arr_name}: E={arr.shape[0]} disagrees with manifest E={manifest['E']}"
                    )
            if isinstance(manifest.get("h"), int) and trace.penultimate_width != manifest["h"]:
                raise ArtifactValidationError(
                    f"{prefix}penultimate: h={trace.penultimate_width} disagrees with "
                    f"manifest h={manifest['h']}"
                )
        return feats, labels, trace

    features, labels, trace = load_split("")
    if not isinstance(manifest.get("n"), int) or manifest["n"] != features.n:
        raise ArtifactValidationError(
            f"{MANIFEST_NAME}: n={manifest.get('n')!r} disagrees with features n={features.n}"
        )
    if not isinstance(manifest.get("d"), int) or manifest["d"] != features.d:
        raise ArtifactValidationError(
            f"{MANIFEST_NAME}: d={manifest.get('d')!r} disagrees with features d={features.d}"
        )

    validation = None
    if ("val_" + _FILES["features"][0]) in declared:
        vfeat, vlabels, vtrace = load_split("val_")
        if vtrace is None:
            raise ArtifactValidationError(f"{MANIFEST_NAME}: validation split requires a val trace")
        validation = ValidationSplit(vfeat, vlabels, vtrace)

    artifact = DatasetArtifact(features, labels, trace, validation)
    artifact.validate()
    return artifact
