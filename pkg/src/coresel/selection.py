"""Shared selection plumbing: class quotas, pools, result assembly.

Balanced selection splits the sample set into per-class pools, gives each
class a quota (k div C, remainder to the lowest-numbered classes) and runs
the method once per pool. Tie-breaking is always "lower index wins" so every
method is fully deterministic.
"""

from __future__ import annotations

import numpy as np

from .artifact import CoresetResult, LabelVector
from .errors import ArtifactValidationError
from .rng import STREAM_SELECT, stream


def class_quotas(labels: LabelVector, k: int) -> np.ndarray:
    """Per-class budgets for a balanced selection of size ``k``."""
    c = labels.num_classes
    base, rem = divmod(k, c)
    quotas = np.full(c, base, dtype=np.int64)
    quotas[:rem] += 1
    counts = labels.class_counts()
    if np.any(counts == 0):
        missing = int(np.argmax(counts == 0))
        raise ArtifactValidationError(
            f"balanced selection requires every class present; class {missing} is empty"
        )
    short = counts < quotas
    if np.any(short):
        bad = int(np.argmax(short))
        raise ArtifactValidationError(
            f"class {bad} has {int(counts[bad])} samples, fewer than its quota {int(quotas[bad])}"
        )
    return quotas


def selection_pools(labels: LabelVector, k: int, balanced: bool):
    """Yield (pool_indices, pool_budget, subkey) for each selection pool.

    Unbalanced selection is a single pool over all samples; balanced
    selection yields one pool per class in class order. ``subkey``
    distinguishes the per-pool random streams.
    """
    n = labels.n
    if not 1 <= k <= n:
        raise ArtifactValidationError(f"budget k={k} outside [1, {n}]")
    if not balanced:
        yield np.arange(n, dtype=np.int64), k, 0
        return
    quotas = class_quotas(labels, k)
    for c in range(labels.num_classes):
        quota = int(quotas[c])
        if quota == 0:
            continue
        pool = np.flatnonzero(labels.labels == c).astype(np.int64)
        yield pool, quota, c


def make_result(indices, weights, method: str, fraction: float, seed: int,
                n: int, budget: int, metadata: dict | None = None) -> CoresetResult:
    """Sort indices (keeping weights aligned) and validate the contract."""
    indices = np.asarray(indices, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    order = np.argsort(indices, kind="stable")
    result = CoresetResult(
        indices=indices[order],
        weights=weights[order],
        method=method,
        fraction=float(fraction),
        seed=int(seed),
        metadata=dict(metadata or {}),
    )
    result.validate(n=n, budget=budget)
    return result


def random_select(labels: LabelVector, k: int, balanced: bool, seed: int,
                  fraction: float | None = None) -> CoresetResult:
    """Uniform draw without replacement (per class when balanced)."""
    picks = []
    for pool, quota, subkey in selection_pools(labels, k, balanced):
        rng = stream(seed, STREAM_SELECT, subkey)
        picks.append(rng.choice(pool, size=quota, replace=False))
    indices = np.concatenate(picks)
    return make_result(
        indices, np.ones(len(indices)), "random",
        fraction if fraction is not None else k / labels.n, seed, labels.n, k,
    )
