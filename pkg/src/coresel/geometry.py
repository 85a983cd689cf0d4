"""Geometry-based selection: herding, k-center greedy, contextual diversity.

Herding greedily keeps the coreset center close to the pool center; k-center
greedy is farthest-first traversal (each step adds the point farthest from
the current centers); contextual diversity is the same traversal run in
prediction space with the symmetric-KL distance on softmax rows. None of
these materialize an n x n distance matrix: distances are computed one row
per added center.
"""

from __future__ import annotations

import numpy as np

from .artifact import CoresetResult, FeatureMatrix, LabelVector, TrainingTrace
from .errors import ArtifactValidationError, MissingTraceError
from .metrics import distance_row
from .rng import STREAM_SELECT, stream
from .selection import make_result, selection_pools


def _features(x) -> np.ndarray:
    data = x.data if isinstance(x, FeatureMatrix) else np.asarray(x)
    return np.asarray(data, dtype=np.float64)


def herding(features, labels: LabelVector, k: int, balanced: bool = False,
            fraction: float | None = None, seed: int = 0) -> CoresetResult:
    """Greedy mean-matching: step m+1 adds the x minimizing ||mu*(m+1) - sigma - x||.

    ``mu`` is the pool mean and ``sigma`` the running sum of selected rows, so
    each step minimizes the distance between the new coreset center and the
    pool center. Ties go to the lower index.
    """
    x = _features(features)
    picks = []
    for pool, quota, _ in selection_pools(labels, k, balanced):
        rows = x[pool]
        mu = rows.mean(axis=0)
        sigma = np.zeros_like(mu)
        taken = np.zeros(len(pool), dtype=bool)
        for m in range(quota):
            target = mu * (m + 1) - sigma
            dist = np.linalg.norm(rows - target, axis=1)
            dist[taken] = np.inf
            pick = int(np.argmin(dist))
            taken[pick] = True
            sigma += rows[pick]
            picks.append(pool[pick])
    return make_result(picks, np.ones(len(picks)), "herding",
                       fraction if fraction is not None else k / labels.n,
                       seed, labels.n, k)


def _farthest_first(rows: np.ndarray, quota: int, first: int,
                    metric: str) -> list[int]:
    """Greedy max-min cover starting from ``first`` (local index)."""
    n = rows.shape[0]
    selected = [first]
    min_dist = distance_row(rows, first, metric)
    min_dist[first] = -1.0  # mask: distances are >= 0 so selected never win argmax
    for _ in range(quota - 1):
        pick = int(np.argmax(min_dist))
        selected.append(pick)
        min_dist = np.minimum(min_dist, distance_row(rows, pick, metric))
        min_dist[pick] = -1.0
    return selected


def _kcenter_on_rows(rows: np.ndarray, labels: LabelVector, k: int, balanced: bool,
                     seed: int, initial: int | None, metric: str, method: str,
                     fraction: float | None) -> CoresetResult:
    if initial is not None and balanced:
        raise ArtifactValidationError("initial index override only applies to unbalanced selection")
    picks = []
    for pool, quota, subkey in selection_pools(labels, k, balanced):
        if initial is not None:
            where = np.flatnonzero(pool == initial)
            if where.size == 0:
                raise ArtifactValidationError(f"initial index {initial} not in selection pool")
            first = int(where[0])
        else:
            first = int(stream(seed, STREAM_SELECT, subkey).integers(len(pool)))
        local = _farthest_first(rows[pool], quota, first, metric)
        picks.extend(pool[i] for i in local)
    return make_result(picks, np.ones(len(picks)), method,
                       fraction if fraction is not None else k / labels.n,
                       seed, labels.n, k)


def k_center_greedy(features, labels: LabelVector, k: int, balanced: bool = False,
                    seed: int = 0, initial: int | None = None,
                    fraction: float | None = None) -> CoresetResult:
    """Farthest-first traversal in feature space with euclidean distance.

    The first center is drawn uniformly from each pool (seeded); ``initial``
    forces it for reproducible experiments and tests.
    """
    return _kcenter_on_rows(_features(features), labels, k, balanced, seed,
                            initial, "euclidean", "kcenter", fraction)


def contextual_diversity(trace: TrainingTrace, labels: LabelVector, k: int,
                         balanced: bool = False, seed: int = 0,
                         initial: int | None = None,
                         fraction: float | None = None) -> CoresetResult:
    """Farthest-first traversal in prediction space (symmetric KL on softmax).

    Reconstruction of the prediction-diversity idea: identical mechanics to
    k-center greedy, only the space and metric change.
    """
    if trace is None:
        raise MissingTraceError("contextual diversity requires a trace (softmax)")
    rows = trace.softmax.astype(np.float64)
    return _kcenter_on_rows(rows, labels, k, balanced, seed,
                            initial, "sym_kl", "cd", fraction)
