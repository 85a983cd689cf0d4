"""Per-sample scalar scores and score-driven selection.

Uncertainty scores (least confidence, entropy, margin) read the softmax
snapshot; forgetting counts scan the per-epoch correctness matrix; the
gradient-norm score and its error-vector approximation use the last-layer
factorization ``grad = (softmax - onehot) x [penultimate; 1]`` so the norm is
a product of factor norms. All scores are oriented by ``higher_is_better``
and selection takes the top of the ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .artifact import CoresetResult, LabelVector, TrainingTrace
from .errors import ArtifactValidationError, MissingTraceError, NumericalError
from .rng import STREAM_SELECT, stream
from .selection import make_result, selection_pools


@dataclass
class ScoreVector:
    """One finite scalar per sample plus the ordering direction."""

    scores: np.ndarray
    higher_is_better: bool
    method: str

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def validate(self) -> None:
        if self.scores.ndim != 1:
            raise ArtifactValidationError("scores must be 1-D")
        if not np.all(np.isfinite(self.scores)):
            raise ArtifactValidationError(f"{self.method}: non-finite score")


def _require(trace: TrainingTrace | None, *fields: str) -> TrainingTrace:
    if trace is None:
        raise MissingTraceError(f"method requires a training trace ({', '.join(fields)})")
    return trace


def least_confidence(trace: TrainingTrace) -> ScoreVector:
    """1 - max class probability; 0 for a one-hot prediction."""
    trace = _require(trace, "softmax")
    p = trace.softmax.astype(np.float64)
    return ScoreVector(1.0 - p.max(axis=1), True, "lc")


def entropy_score(trace: TrainingTrace) -> ScoreVector:
    """Prediction entropy in nats, with 0 * ln 0 taken as 0."""
    trace = _require(trace, "softmax")
    p = trace.softmax.astype(np.float64)
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return ScoreVector(-plogp.sum(axis=1), True, "entropy")


def margin_score(trace: TrainingTrace) -> ScoreVector:
    """1 - (top probability - runner-up probability); 1 at a tie."""
    trace = _require(trace, "softmax")
    p = trace.softmax.astype(np.float64)
    if p.shape[1] < 2:
        raise ArtifactValidationError("margin requires C >= 2")
    part = np.partition(p, -2, axis=1)
    return ScoreVector(1.0 - (part[:, -1] - part[:, -2]), True, "margin")


def forgetting_count(trace: TrainingTrace) -> ScoreVector:
    """Count of correct-to-incorrect flips between consecutive epochs.

    Samples that are never predicted correctly in any epoch get score E so
    they rank above every merely-forgotten sample.
    """
    trace = _require(trace, "correctness")
    acc = trace.correctness
    if acc.shape[0] < 2:
        raise ArtifactValidationError("forgetting needs at least 2 recorded epochs")
    flips = ((acc[:-1] == 1) & (acc[1:] == 0)).sum(axis=0).astype(np.float64)
    never = acc.max(axis=0) == 0
    flips[never] = acc.shape[0]
    return ScoreVector(flips, True, "forgetting")


def el2n_score(trace: TrainingTrace) -> ScoreVector:
    """l2 norm of the error vector softmax - onehot."""
    trace = _require(trace, "error_vectors")
    err = trace.error_vectors.astype(np.float64)
    return ScoreVector(np.linalg.norm(err, axis=1), True, "el2n")


def grand_score(trace: TrainingTrace, include_bias: bool = True) -> ScoreVector:
    """Gradient norm of the final linear layer for each sample.

    Uses the factorization norm identity: ||(p - y) f^T||_F =
    ||p - y|| * sqrt(||f||^2 + 1 if the bias column is included).
    """
    trace = _require(trace, "error_vectors", "penultimate")
    err = np.linalg.norm(trace.error_vectors.astype(np.float64), axis=1)
    fsq = np.einsum("ij,ij->i", trace.penultimate.astype(np.float64),
                    trace.penultimate.astype(np.float64))
    return ScoreVector(err * np.sqrt(fsq + (1.0 if include_bias else 0.0)), True, "grand")


def sensitivity_probabilities(trace: TrainingTrace) -> np.ndarray:
    """Per-sample selection probabilities proportional to the reference loss."""
    trace = _require(trace, "losses")
    losses = trace.losses.astype(np.float64)
    total = losses.sum()
    if total <= 0:
        raise NumericalError("all losses are zero; sampling probabilities are degenerate")
    return losses / total


def average_scores(vectors: list[ScoreVector]) -> ScoreVector:
    """Arithmetic mean of score vectors from independent runs."""
    if not vectors:
        raise ArtifactValidationError("no score vectors to average")
    first = vectors[0]
    for v in vectors[1:]:
        if v.n != first.n or v.higher_is_better != first.higher_is_better:
            raise ArtifactValidationError("score vectors disagree in length or orientation")
    mean = np.mean([v.scores for v in vectors], axis=0)
    return ScoreVector(mean, first.higher_is_better, first.method)


def select_by_score(score: ScoreVector, labels: LabelVector, k: int,
                    balanced: bool = False, seed: int = 0,
                    fraction: float | None = None) -> CoresetResult:
    """Take the top k of the score ordering (per class when balanced).

    Ties always break toward the lower sample index; weights are uniform 1.
    """
    score.validate()
    if score.n != labels.n:
        raise ArtifactValidationError("score length disagrees with labels")
    keys = -score.scores if score.higher_is_better else score.scores
    picks = []
    for pool, quota, _ in selection_pools(labels, k, balanced):
        order = np.argsort(keys[pool], kind="stable")
        picks.append(pool[order[:quota]])
    indices = np.concatenate(picks)
    return make_result(indices, np.ones(len(indices)), score.method,
                       fraction if fraction is not None else k / labels.n,
                       seed, labels.n, k)


def _draw_without_replacement(rng: np.random.Generator, probs: np.ndarray,
                              count: int) -> tuple[np.ndarray, bool]:
    """Sequential draws, removing drawn mass and renormalizing each step.

    Falls back to a uniform draw over the remainder once all remaining mass
    is zero; the flag reports whether that happened.
    """
    probs = probs.astype(np.float64).copy()
    chosen = np.empty(count, dtype=np.int64)
    degenerate = False
    for t in range(count):
        total = probs.sum()
        if total <= 0:
            remaining = np.flatnonzero(~np.isin(np.arange(len(probs)), chosen[:t]))
            fill = rng.choice(remaining, size=count - t, replace=False)
            chosen[t:] = fill
            degenerate = True
            break
        pick = rng.choice(len(probs), p=probs / total)
        chosen[t] = pick
        probs[pick] = 0.0
    return chosen, degenerate


def importance_sample(trace: TrainingTrace, labels: LabelVector, k: int,
                      balanced: bool = False, seed: int = 0,
                      fraction: float | None = None) -> CoresetResult:
    """Draw k samples without replacement with loss-proportional probabilities."""
    degenerate = False
    try:
        probs = sensitivity_probabilities(trace)
    except NumericalError:
        # all-zero losses: fall back to a uniform draw, recorded in metadata
        probs = np.full(trace.n, 1.0 / trace.n)
        degenerate = True
    if probs.shape[0] != labels.n:
        raise ArtifactValidationError("trace length disagrees with labels")
    picks = []
    for pool, quota, subkey in selection_pools(labels, k, balanced):
        rng = stream(seed, STREAM_SELECT, subkey)
        local, fell_back = _draw_without_replacement(rng, probs[pool], quota)
        degenerate |= fell_back
        picks.append(pool[local])
    indices = np.concatenate(picks)
    meta = {"uniform_fallback": True} if degenerate else {}
    return make_result(indices, np.ones(len(indices)), "importance",
                       fraction if fraction is not None else k / labels.n,
                       seed, labels.n, k, meta)
