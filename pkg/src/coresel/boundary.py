"""Decision-boundary scores: neighborhood disagreement and boundary distance.

``cal_scores`` ranks samples by how much their prediction diverges from
their feature-space neighbors' predictions. The DeepFool scores estimate
each sample's distance to the nearest decision boundary: exactly (closed
form) for a linear head, iteratively (standard linearization steps) for the
built-in MLP. Boundary distances are ascending scores: smaller perturbation
means closer to the boundary, selected first.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .artifact import FeatureMatrix, TrainingTrace
from .errors import ArtifactValidationError, MissingTraceError, NumericalError
from .metrics import KL_FLOOR
from .scores import ScoreVector
from .trainer import ProxyModel


def _rows(x) -> np.ndarray:
    data = x.data if isinstance(x, FeatureMatrix) else np.asarray(x)
    return np.asarray(data, dtype=np.float64)


def cal_scores(features, trace: TrainingTrace, k_neighbors: int = 10) -> ScoreVector:
    """Mean KL(neighbor softmax || own softmax) over the k nearest neighbors.

    Neighbors are found with euclidean distance in feature space, excluding
    the sample itself; probabilities are floored before taking logs. The
    score is zero iff every neighbor predicts exactly like the sample.
    """
    if trace is None:
        raise MissingTraceError("cal requires a training trace (softmax)")
    x = _rows(features)
    n = x.shape[0]
    if not 1 <= k_neighbors < n:
        raise ArtifactValidationError(f"k_neighbors={k_neighbors} outside [1, {n - 1}]")
    if trace.n != n:
        raise ArtifactValidationError("trace length disagrees with features")

    dist = cdist(x, x, metric="euclidean")
    np.fill_diagonal(dist, np.inf)
    nn = np.argsort(dist, axis=1, kind="stable")[:, :k_neighbors]

    p = np.maximum(trace.softmax.astype(np.float64), KL_FLOOR)
    logp = np.log(p)
    self_term = np.einsum("jk,jk->j", p, logp)  # sum p_j ln p_j per row j
    scores = np.empty(n)
    for i in range(n):
        neigh = nn[i]
        # KL(p_j || p_i) = sum_k p_jk (ln p_jk - ln p_ik)
        scores[i] = float(np.mean(self_term[neigh] - p[neigh] @ logp[i]))
    return ScoreVector(np.maximum(scores, 0.0), True, "cal")


def deepfool_margin_linear(w: np.ndarray, b: np.ndarray, penultimate,
                           labels=None) -> ScoreVector:
    """Exact distance to the nearest linear decision boundary.

    For sample f with predicted class y = argmax(Wf + b) the distance to the
    boundary against class c is |logit_y - logit_c| / ||W_y - W_c||; the
    score is the minimum over c != y. Identical weight rows (zero denominator)
    are skipped; if every competing class is degenerate the model cannot
    separate anything and an error is raised. Lower scores rank first.
    """
    f = _rows(penultimate)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = w.shape[0]
    if c < 2:
        raise ArtifactValidationError("deepfool requires C >= 2")
    if f.shape[1] != w.shape[1]:
        raise ArtifactValidationError("penultimate width disagrees with weight matrix")

    logits = f @ w.T + b
    yhat = np.argmax(logits, axis=1)
    # ||W_y - W_c|| for every class pair
    diff_norm = cdist(w, w, metric="euclidean")

    scores = np.empty(f.shape[0])
    for i, y in enumerate(yhat):
        denom = diff_norm[y]
        num = np.abs(logits[i, y] - logits[i])
        valid = (np.arange(c) != y) & (denom > 0)
        if not np.any(valid):
            raise NumericalError(
                f"sample {i}: all competing class rows identical to class {y}"
            )
        scores[i] = float(np.min(num[valid] / denom[valid]))
    return ScoreVector(scores, False, "deepfool")


def deepfool_iterative(model: ProxyModel, inputs, labels=None,
                       max_iters: int = 50, overshoot: float = 0.02) -> ScoreVector:
    """Norm of the accumulated DeepFool perturbation per sample.

    Standard linearization: at each step move toward the cheapest boundary of
    the current iterate, overshooting by ``1 + overshoot`` to cross it; the
    score is the norm of the un-overshot accumulated step, so on a linear
    model one iteration reproduces the closed-form boundary distance. Samples
    that never flip within ``max_iters`` are scored at 10x the largest
    flipped perturbation; their count is attached to the returned vector as
    ``unflipped`` for selection metadata. Lower scores rank first.
    """
    if model is None:
        raise MissingTraceError("deepfool_iterative requires a proxy model handle")
    if max_iters < 1:
        raise ArtifactValidationError("max_iters must be >= 1")
    x = _rows(inputs)
    n = x.shape[0]
    scores = np.full(n, np.nan)
    flipped = np.zeros(n, dtype=bool)

    for i in range(n):
        x0 = x[i]
        orig = int(np.argmax(model.logits(x0[None, :])[0]))
        r_tot = np.zeros_like(x0)
        for _ in range(max_iters):
            xi = x0 + (1.0 + overshoot) * r_tot
            logits = model.logits(xi[None, :])[0]
            if int(np.argmax(logits)) != orig:
                break
            jac = model.input_jacobian(xi)
            w_diff = jac - jac[orig]
            f_diff = logits - logits[orig]
            norms = np.linalg.norm(w_diff, axis=1)
            ratios = np.full(len(logits), np.inf)
            ok = (np.arange(len(logits)) != orig) & (norms > 0)
            ratios[ok] = np.abs(f_diff[ok]) / norms[ok]
            c = int(np.argmin(ratios))
            if not np.isfinite(ratios[c]):
                break  # no usable boundary direction
            # smallest step onto the linearized boundary of class c; the tiny
            # nudge guarantees crossing for points already on the boundary
            r_tot = r_tot + (ratios[c] + 1e-9) * w_diff[c] / max(norms[c], 1e-12)
        xi = x0 + (1.0 + overshoot) * r_tot
        flipped[i] = int(np.argmax(model.logits(xi[None, :])[0])) != orig
        scores[i] = np.linalg.norm(r_tot)

    if not np.all(flipped):
        bound = 10.0 * (scores[flipped].max() if np.any(flipped) else 1.0)
        scores[~flipped] = bound
    vec = ScoreVector(scores, False, "deepfool")
    vec.unflipped = int(np.count_nonzero(~flipped))  # consumed by CLI metadata
    return vec
