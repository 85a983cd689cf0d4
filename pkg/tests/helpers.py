"""Shared builders for trace and artifact test instances."""

import numpy as np

from coresel import (
    DatasetArtifact,
    FeatureMatrix,
    LabelVector,
    TrainingTrace,
)


def onehot(labels, num_classes):
    return np.eye(num_classes, dtype=np.float32)[np.asarray(labels)]


def make_trace(softmax, labels, correctness=None, losses=None, penultimate=None,
               reference_epoch=1, num_epochs=None):
    """TrainingTrace with all invariants satisfied from a softmax matrix."""
    softmax = np.asarray(softmax, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int32)
    n, c = softmax.shape
    if correctness is None:
        num_epochs = num_epochs or 2
        correctness = np.ones((num_epochs, n), dtype=np.uint8)
    else:
        correctness = np.asarray(correctness, dtype=np.uint8)
        num_epochs = correctness.shape[0]
    if losses is None:
        p_true = np.maximum(softmax[np.arange(n), labels], 1e-12)
        losses = -np.log(p_true)
    if penultimate is None:
        penultimate = np.ones((n, 2), dtype=np.float32)
    return TrainingTrace(
        correctness=correctness,
        softmax=softmax,
        losses=losses,
        error_vectors=softmax - onehot(labels, c),
        penultimate=penultimate,
        reference_epoch=reference_epoch,
        num_epochs=num_epochs,
    )


def random_softmax(rng, n, c):
    logits = rng.normal(size=(n, c))
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    return (p / p.sum(axis=1, keepdims=True)).astype(np.float32)


def random_trace(rng, n, c, h=3, num_epochs=4):
    softmax = random_softmax(rng, n, c)
    labels = rng.integers(0, c, size=n).astype(np.int32)
    return make_trace(
        softmax,
        labels,
        correctness=rng.integers(0, 2, size=(num_epochs, n)).astype(np.uint8),
        penultimate=rng.normal(size=(n, h)).astype(np.float32),
    ), labels


def make_artifact(features, labels, num_classes=None, trace=None, validation=None):
    labels = np.asarray(labels, dtype=np.int32)
    c = num_classes or int(labels.max()) + 1
    return DatasetArtifact(
        FeatureMatrix(np.asarray(features, dtype=np.float32)),
        LabelVector(labels, c),
        trace,
        validation,
    )
