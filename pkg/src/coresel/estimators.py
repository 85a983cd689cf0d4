"""Scikit-learn style wrappers around the selection engine.

``CoresetSelector`` is a transformer whose ``fit(X, y)`` picks a weighted
subset of the rows of X; ``transform`` keeps only the selected rows.
Methods that need model traces get them from an internally trained proxy, so
the estimator composes with plain (X, y) arrays and the wider sklearn
ecosystem. ``ProxyClassifier`` exposes the proxy trainer itself with the
usual fit/predict/predict_proba surface.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .artifact import DatasetArtifact, FeatureMatrix, LabelVector
from .engine import METHODS, run_method
from .errors import ArtifactValidationError
from .trainer import (
    TrainConfig,
    holdout_split,
    record_trace,
    record_trace_with_validation,
    train,
)


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.dtype.kind not in "iu":
        rounded = np.asarray(y, dtype=np.float64)
        if np.any(rounded != np.round(rounded)):
            raise ArtifactValidationError("labels must be integers")
        y = rounded.astype(np.int64)
    if y.min() < 0:
        raise ArtifactValidationError("labels must be >= 0")
    return y.astype(np.int32)


class CoresetSelector(TransformerMixin, BaseEstimator):
    """Select a weighted subset of training samples with any catalog method.

    Parameters mirror the CLI flags: ``method`` is one of the registry names
    (random, herding, kcenter, cd, lc, entropy, margin, forgetting, grand,
    el2n, importance, cal, deepfool, craig, gradmatch, glister, fl, gc),
    ``fraction`` sets the budget, ``balanced`` enforces per-class quotas.
    Methods that read training dynamics trigger an internal proxy run
    (``arch``/``hidden_units``/``epochs``/``reference_epoch``); glister
    additionally carves ``val_fraction`` of the data into a held-out split.

    After ``fit``: ``indices_`` (sorted positions into X), ``weights_`` and
    ``result_`` (the full selection record) are available; ``transform``
    returns the selected rows.
    """

    def __init__(self, method="kcenter", fraction=0.1, balanced=False,
                 random_state=0, arch="mlp1", hidden_units=32, epochs=20,
                 reference_epoch=10, batch_size=32, lr=0.1, momentum=0.9,
                 weight_decay=5e-4, lr_schedule="cosine", val_fraction=0.1,
                 knn=10, gc_lambda=0.5, omp_lambda=1.0, eta=0.1,
                 grad_space="error_vector"):
        self.method = method
        self.fraction = fraction
        self.balanced = balanced
        self.random_state = random_state
        self.arch = arch
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.reference_epoch = reference_epoch
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lr_schedule = lr_schedule
        self.val_fraction = val_fraction
        self.knn = knn
        self.gc_lambda = gc_lambda
        self.omp_lambda = omp_lambda
        self.eta = eta
        self.grad_space = grad_space

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           lr=self.lr, momentum=self.momentum,
                           weight_decay=self.weight_decay, seed=self.random_state,
                           lr_schedule=self.lr_schedule)

    def _build_artifact(self, X, y) -> DatasetArtifact:
        spec = METHODS.get(self.method)
        if spec is None:
            raise ArtifactValidationError(f"unknown method {self.method!r}")
        features = FeatureMatrix(X)
        labels = LabelVector(y, int(y.max()) + 1)
        if not spec.trace_fields and not spec.needs_validation:
            return DatasetArtifact(features, labels)
        cfg = self._train_config()
        if not spec.needs_validation:
            trace = record_trace(self.arch, features, labels, cfg,
                                 self.reference_epoch, self.hidden_units)
            return DatasetArtifact(features, labels, trace)
        # bilevel methods: hold out part of X as the validation split
        tr_f, tr_l, va_f, va_l, positions = holdout_split(features, labels,
                                                          self.val_fraction)
        trace, val_trace = record_trace_with_validation(
            self.arch, tr_f, tr_l, va_f, va_l, cfg,
            self.reference_epoch, self.hidden_units)
        from .artifact import ValidationSplit

        self._train_positions = positions
        return DatasetArtifact(tr_f, tr_l, trace,
                               ValidationSplit(va_f, va_l, val_trace))

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = _check_labels(y)
        self._train_positions = None
        artifact = self._build_artifact(X, y)
        params = {"knn": self.knn, "gc_lambda": self.gc_lambda,
                  "omp_lambda": self.omp_lambda, "eta": self.eta,
                  "grad_space": self.grad_space}
        result = run_method(artifact, self.method, self.fraction,
                            self.balanced, self.random_state, params)
        if self._train_positions is not None:
            # map indices from the internal train split back to rows of X
            order = np.argsort(self._train_positions[result.indices], kind="stable")
            self.indices_ = self._train_positions[result.indices][order]
            self.weights_ = result.weights[order]
        else:
            self.indices_ = result.indices
            self.weights_ = result.weights
        self.result_ = result
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "indices_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ArtifactValidationError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X[self.indices_]

    def fit_transform(self, X, y=None, **fit_params):
        if y is None:
            raise ArtifactValidationError("CoresetSelector.fit_transform requires y")
        return self.fit(X, y, **fit_params).transform(X)


class ProxyClassifier(ClassifierMixin, BaseEstimator):
    """The built-in proxy model behind a standard classifier interface."""

    def __init__(self, arch="linear", hidden_units=32, epochs=100, batch_size=32,
                 lr=0.1, momentum=0.9, weight_decay=5e-4, lr_schedule="cosine",
                 random_state=0):
        self.arch = arch
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lr_schedule = lr_schedule
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = _check_labels(y)
        self.classes_ = np.unique(y)
        labels = LabelVector(y, int(y.max()) + 1)
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          lr=self.lr, momentum=self.momentum,
                          weight_decay=self.weight_decay, seed=self.random_state,
                          lr_schedule=self.lr_schedule)
        self.model_ = train(self.arch, FeatureMatrix(X), labels,
                            sample_weight, cfg, self.hidden_units)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return self.model_.softmax(X)

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return self.model_.predict(X)
