"""Gradient-matching and bilevel selection: CRAIG, OMP GradMatch, GLISTER.

All three operate on per-sample last-layer gradients. For a linear head the
gradient factorizes as (softmax - onehot) x [penultimate; 1], so the rows are
built from the trace without materializing network gradients. The compact
``error_vector`` space (g = C) is the default; ``full_last_layer`` flattens
the full outer product (g = C * (h + 1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .artifact import CoresetResult, DatasetArtifact, LabelVector, TrainingTrace
from .errors import ArtifactValidationError, MissingTraceError, NumericalError
from .selection import make_result, selection_pools
from .submodular import SubmodularObjective, greedy_maximize

GRADIENT_SPACES = ("error_vector", "full_last_layer")

RESIDUAL_STOP = 1e-9


@dataclass
class GradientSet:
    """Per-sample gradient rows plus their arithmetic mean."""

    grads: np.ndarray
    mean_grad: np.ndarray

    @property
    def n(self) -> int:
        return self.grads.shape[0]


def build_gradient_set(trace: TrainingTrace, space: str = "error_vector") -> GradientSet:
    """Materialize gradient rows in the requested space."""
    if trace is None:
        raise MissingTraceError("gradient methods require a training trace")
    if space not in GRADIENT_SPACES:
        raise ArtifactValidationError(f"unknown gradient space {space!r}")
    err = trace.error_vectors.astype(np.float64)
    if space == "error_vector":
        grads = err
    else:
        f_aug = np.concatenate(
            [trace.penultimate.astype(np.float64), np.ones((trace.n, 1))], axis=1
        )
        grads = np.einsum("ic,ih->ich", err, f_aug).reshape(trace.n, -1)
    return GradientSet(grads, grads.mean(axis=0))


def craig_select(gs: GradientSet, labels: LabelVector, k: int, balanced: bool = False,
                 seed: int = 0, fraction: float | None = None) -> CoresetResult:
    """Facility-location greedy over gradient similarity, with cluster weights.

    Similarity is max-distance minus euclidean distance between gradient rows
    (the shift keeps the objective monotone). Each pool element is assigned
    to its most similar selected row; the selected row's weight is its
    cluster size, so weights are positive integers summing to the pool size.
    Selected rows count themselves, and assignment ties go to the lowest
    selected index.
    """
    if gs.n != labels.n:
        raise ArtifactValidationError("gradient set length disagrees with labels")
    picks: list[int] = []
    weights: list[float] = []
    for pool, quota, _ in selection_pools(labels, k, balanced):
        rows = gs.grads[pool]
        dist = cdist(rows, rows, metric="euclidean")
        sim = dist.max() - dist
        obj = SubmodularObjective("facility_location", sim)
        local, _ = greedy_maximize(obj, quota, lazy=True)
        sel = np.asarray(sorted(local), dtype=np.int64)
        counts = np.zeros(len(sel), dtype=np.int64)
        sel_pos = {int(j): p for p, j in enumerate(sel)}
        for i in range(len(pool)):
            if i in sel_pos:
                counts[sel_pos[i]] += 1
            else:
                counts[int(np.argmax(sim[i, sel]))] += 1
        picks.extend(pool[j] for j in sel)
        weights.extend(float(c) for c in counts)
    return make_result(picks, weights, "craig",
                       fraction if fraction is not None else k / labels.n,
                       seed, labels.n, k)


def omp_solve(columns: np.ndarray, target: np.ndarray, k: int,
              lam: float = 0.0, nonneg: bool = False):
    """Orthogonal matching pursuit with a ridge re-solve after each pick.

    ``columns`` is (g, m); each step adds the column with the largest
    absolute correlation with the residual (ties to the lower index), then
    solves min_w ||A w - target||^2 + lam ||w||^2 over the picked columns.
    Negative weights are clamped to zero when ``nonneg``. Stops early once
    the residual norm drops below 1e-9 but pads the pick list to k (weight 0,
    in residual-correlation order) so the selection size contract holds.

    Returns (picks in order, weights aligned with picks, residual norms per
    completed step).
    """
    g, m = columns.shape
    if not 1 <= k <= m:
        raise ArtifactValidationError(f"k={k} outside [1, {m}]")
    if lam < 0:
        raise ArtifactValidationError("lambda must be >= 0")
    picks: list[int] = []
    weights = np.zeros(0)
    residual = target.astype(np.float64).copy()
    norms: list[float] = []
    taken = np.zeros(m, dtype=bool)
    for _ in range(k):
        corr = np.abs(columns.T @ residual)
        corr[taken] = -1.0
        pick = int(np.argmax(corr))
        picks.append(pick)
        taken[pick] = True
        a = columns[:, picks]
        gram = a.T @ a + lam * np.eye(len(picks))
        try:
            weights = np.linalg.solve(gram, a.T @ target)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "singular ridge system (duplicate columns with lambda=0); "
                "use lambda > 0"
            ) from exc
        if nonneg:
            weights = np.maximum(weights, 0.0)
        residual = target - a @ weights
        norms.append(float(np.linalg.norm(residual)))
        if norms[-1] < RESIDUAL_STOP:
            break
    if len(picks) < k:
        corr = np.abs(columns.T @ residual)
        corr[taken] = -1.0
        order = np.argsort(-corr, kind="stable")
        pad = [int(j) for j in order[: k - len(picks)]]
        picks.extend(pad)
        weights = np.concatenate([weights, np.zeros(len(pad))])
    return picks, weights, norms


def omp_gradmatch(gs: GradientSet, labels: LabelVector, k: int, balanced: bool = False,
                  lam: float = 1.0, nonneg: bool = True, seed: int = 0,
                  fraction: float | None = None) -> CoresetResult:
    """Match each pool's mean gradient with a sparse nonnegative combination.

    Per pool the target is the mean gradient row and the dictionary holds the
    pool's gradient rows as columns. Raw OMP weights are rescaled to sum to
    the pool size, so a weighted mean over the coreset matches the scale of
    the pool mean. A pool whose weights all collapse to zero falls back to
    uniform weights (recorded in metadata).
    """
    if gs.n != labels.n:
        raise ArtifactValidationError("gradient set length disagrees with labels")
    picks: list[int] = []
    weights: list[float] = []
    degenerate = False
    for pool, quota, _ in selection_pools(labels, k, balanced):
        columns = gs.grads[pool].T
        target = gs.grads[pool].mean(axis=0)
        local, w, _ = omp_solve(columns, target, quota, lam, nonneg)
        total = np.abs(w).sum()
        if total > 0:
            w = w * (len(pool) / total)
        else:
            w = np.ones(len(local))
            degenerate = True
        picks.extend(pool[j] for j in local)
        weights.extend(float(x) for x in w)
    meta = {"uniform_fallback": True} if degenerate else {}
    return make_result(picks, weights, "gradmatch",
                       fraction if fraction is not None else k / labels.n,
                       seed, labels.n, k, meta)


def _loglik_grad_rows(softmax: np.ndarray, labels: np.ndarray,
                      feats_aug: np.ndarray) -> np.ndarray:
    """Rows of the log-likelihood gradient -(p - y) x [f; 1], flattened."""
    err = softmax.copy()
    err[np.arange(len(labels)), labels] -= 1.0
    return np.einsum("ic,ih->ich", -err, feats_aug).reshape(len(labels), -1)


def validation_gains(ll_grad_rows, v, eta: float) -> np.ndarray:
    """One-step Taylor gain per candidate: eta <candidate ll-grad, val ll-grad>."""
    return eta * (np.asarray(ll_grad_rows, dtype=np.float64)
                  @ np.asarray(v, dtype=np.float64))


def glister_select(train: DatasetArtifact, val=None, k: int = 1,
                   balanced: bool = False, eta: float = 0.1,
                   refresh_every: int | None = None, seed: int = 0,
                   fraction: float | None = None) -> CoresetResult:
    """Greedy validation-gain selection with periodic re-linearization.

    The validation gradient v (sum of per-sample log-likelihood gradients in
    last-layer space) is computed once. A candidate's gain is eta times the
    inner product of its own log-likelihood gradient with v. Every
    ``refresh_every`` picks (default max(1, k // 10)) the last layer takes
    one gradient-ascent step of size eta on the selected block's mean
    log-likelihood gradient: candidate logits shift accordingly and gains are
    recomputed, so redundant candidates fade. Ties go to the lower index.
    """
    if train.trace is None:
        raise MissingTraceError("glister requires a training trace (error_vectors, penultimate)")
    if val is None:
        val = train.validation
    if val is None:
        raise MissingTraceError(
            "glister requires a validation split (val_features, val_labels, val_*)"
        )
    if eta <= 0:
        raise ArtifactValidationError("eta must be > 0")
    val_trace = val.trace if hasattr(val, "trace") else val[2]
    val_feats_aug = np.concatenate(
        [val_trace.penultimate.astype(np.float64), np.ones((val_trace.n, 1))], axis=1
    )
    v = -np.einsum(
        "ic,ih->ch", val_trace.error_vectors.astype(np.float64), val_feats_aug
    ).reshape(-1)

    trace = train.trace
    labels = train.labels
    block = refresh_every if refresh_every is not None else max(1, k // 10)
    if block < 1:
        raise ArtifactValidationError("refresh_every must be >= 1")
    feats_aug_all = np.concatenate(
        [trace.penultimate.astype(np.float64), np.ones((trace.n, 1))], axis=1
    )
    log_p_all = np.log(np.maximum(trace.softmax.astype(np.float64), 1e-12))

    picks: list[int] = []
    for pool, quota, _ in selection_pools(labels, k, balanced):
        feats_aug = feats_aug_all[pool]
        y = labels.labels[pool]
        logits = log_p_all[pool].copy()
        taken = np.zeros(len(pool), dtype=bool)
        while int(taken.sum()) < quota:
            z = logits - logits.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            rows = _loglik_grad_rows(p, y, feats_aug)
            gains = validation_gains(rows, v, eta)
            gains[taken] = np.inf  # excluded from the stable ascending sort below
            order = np.argsort(-gains, kind="stable")
            want = min(block, quota - int(taken.sum()))
            chunk = [int(j) for j in order if not taken[j]][:want]
            for j in chunk:
                taken[j] = True
            # one ascent step on the block's mean log-likelihood gradient
            step = rows[chunk].mean(axis=0).reshape(trace.num_classes, -1)
            logits += eta * (feats_aug @ step.T)
        picks.extend(pool[j] for j in np.flatnonzero(taken))
    return make_result(picks, np.ones(len(picks)), "glister",
                       fraction if fraction is not None else k / labels.n,
                       seed, labels.n, k)
