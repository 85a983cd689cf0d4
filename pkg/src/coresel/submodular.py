"""Submodular objectives and greedy maximizers.

Facility location f(S) = sum_i max_{j in S} sim(i, j) rewards covering every
point with a similar representative; graph cut f(S) = sum_{i in V, j in S}
sim(i, j) - lam * sum_{i, j in S} sim(i, j) trades coverage against intra-set
redundancy. Both are submodular for nonnegative similarities; facility
location is also monotone, so plain greedy carries the classic 1 - 1/e
guarantee. The lazy maximizer is output-identical to the naive one and a
brute-force enumerator serves as the test oracle.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .artifact import CoresetResult, FeatureMatrix, LabelVector
from .errors import ArtifactValidationError, NumericalError
from .metrics import (
    PAIRWISE_CAP,
    SimilarityMatrix,
    _unit_rows,
    cosine_shifted_column,
    similarity_from_features,
)
from .selection import make_result, selection_pools

OBJECTIVE_KINDS = ("facility_location", "graph_cut")


@dataclass
class SubmodularObjective:
    """A maximization objective over subsets of [0, n)."""

    kind: str
    sim: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ArtifactValidationError(f"unknown objective kind {self.kind!r}")
        sim = self.sim.values if isinstance(self.sim, SimilarityMatrix) else np.asarray(self.sim)
        sim = np.asarray(sim, dtype=np.float64)
        if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
            raise ArtifactValidationError("similarity must be a square matrix")
        if np.any(sim < 0):
            raise ArtifactValidationError("similarities must be nonnegative")
        if self.lam < 0:
            raise ArtifactValidationError("lambda must be >= 0")
        self.sim = sim

    @property
    def n(self) -> int:
        return self.sim.shape[0]


def evaluate(obj: SubmodularObjective, subset) -> float:
    """Objective value of ``subset``; the empty set evaluates to 0."""
    s = np.asarray(sorted(set(int(i) for i in subset)), dtype=np.int64)
    if s.size == 0:
        return 0.0
    if s[0] < 0 or s[-1] >= obj.n:
        raise ArtifactValidationError(f"subset index outside [0, {obj.n})")
    if obj.kind == "facility_location":
        return float(obj.sim[:, s].max(axis=1).sum())
    cover = float(obj.sim[:, s].sum())
    redundancy = float(obj.sim[np.ix_(s, s)].sum())
    return cover - obj.lam * redundancy


class _GreedyState:
    """Incremental marginal gains for both objectives."""

    def __init__(self, obj: SubmodularObjective):
        self.obj = obj
        if obj.kind == "facility_location":
            self.cur_max = np.zeros(obj.n)
        else:
            self.col_sum = obj.sim.sum(axis=0)
            self.sel_sim = np.zeros(obj.n)

    def gain(self, j: int) -> float:
        if self.obj.kind == "facility_location":
            return float(np.maximum(self.obj.sim[:, j] - self.cur_max, 0.0).sum())
        return float(self.col_sum[j]
                     - self.obj.lam * (2.0 * self.sel_sim[j] + self.obj.sim[j, j]))

    def all_gains(self) -> np.ndarray:
        if self.obj.kind == "facility_location":
            return np.maximum(self.obj.sim - self.cur_max[:, None], 0.0).sum(axis=0)
        return self.col_sum - self.obj.lam * (2.0 * self.sel_sim + np.diag(self.obj.sim))

    def add(self, j: int) -> None:
        if self.obj.kind == "facility_location":
            np.maximum(self.cur_max, self.obj.sim[:, j], out=self.cur_max)
        else:
            self.sel_sim += self.obj.sim[:, j]


def greedy_maximize(obj: SubmodularObjective, k: int, lazy: bool = False):
    """Greedy maximization under a cardinality constraint.

    Returns (picks in selection order, marginal gain at each pick). Ties
    break toward the lower index. Exactly k elements are selected even if
    late gains go negative (graph cut with large lambda), because the
    selection-size contract wins. The lazy variant keeps stale gains in a
    priority queue and re-evaluates on pop; its output is identical to the
    naive sweep.
    """
    if not 0 <= k <= obj.n:
        raise ArtifactValidationError(f"k={k} outside [0, {obj.n}]")
    state = _GreedyState(obj)
    picks: list[int] = []
    gains: list[float] = []
    if lazy:
        heap = [(-g, j) for j, g in enumerate(state.all_gains())]
        heapq.heapify(heap)
        for _ in range(k):
            while True:
                neg_g, j = heapq.heappop(heap)
                fresh = state.gain(j)
                if not heap or (-fresh, j) <= heap[0]:
                    picks.append(j)
                    gains.append(fresh)
                    state.add(j)
                    break
                heapq.heappush(heap, (-fresh, j))
    else:
        available = np.ones(obj.n, dtype=bool)
        for _ in range(k):
            g = state.all_gains()
            g[~available] = -np.inf
            j = int(np.argmax(g))
            picks.append(j)
            gains.append(float(g[j]))
            available[j] = False
            state.add(j)
    return picks, gains


def brute_force_optimum(obj: SubmodularObjective, k: int, budget: int = 10**6):
    """Exhaustive optimum over all k-subsets (test oracle).

    Ties resolve to the lexicographically smallest subset. Refuses instances
    with more than ``budget`` candidate subsets.
    """
    if not 0 <= k <= obj.n:
        raise ArtifactValidationError(f"k={k} outside [0, {obj.n}]")
    if math.comb(obj.n, k) > budget:
        raise NumericalError(f"C({obj.n}, {k}) exceeds the enumeration budget {budget}")
    best_set: tuple[int, ...] | None = None
    best_val = -np.inf
    for cand in itertools.combinations(range(obj.n), k):
        val = evaluate(obj, cand)
        if val > best_val:
            best_val = val
            best_set = cand
    return best_set, float(best_val)


def _fl_greedy_streaming(unit_rows: np.ndarray, quota: int) -> list[int]:
    """Lazy facility-location greedy with on-demand cosine_shifted columns."""
    n = unit_rows.shape[0]
    # initial gains at S = {}: column sums, accumulated in blocks of rows
    col_sum = np.zeros(n)
    step = 4096
    for lo in range(0, n, step):
        block = (1.0 + np.clip(unit_rows[lo : lo + step] @ unit_rows.T, -1.0, 1.0)) / 2.0
        col_sum += block.sum(axis=0)
    cur_max = np.zeros(n)
    heap = [(-g, j) for j, g in enumerate(col_sum)]
    heapq.heapify(heap)
    picks: list[int] = []
    for _ in range(quota):
        while True:
            neg_g, j = heapq.heappop(heap)
            col = cosine_shifted_column(unit_rows, j)
            fresh = float(np.maximum(col - cur_max, 0.0).sum())
            if not heap or (-fresh, j) <= heap[0]:
                picks.append(j)
                np.maximum(cur_max, col, out=cur_max)
                break
            heapq.heappush(heap, (-fresh, j))
    return picks


def _gc_greedy_streaming(unit_rows: np.ndarray, quota: int, lam: float) -> list[int]:
    """Graph-cut greedy with on-demand cosine_shifted columns."""
    n = unit_rows.shape[0]
    col_sum = np.zeros(n)
    step = 4096
    for lo in range(0, n, step):
        block = (1.0 + np.clip(unit_rows[lo : lo + step] @ unit_rows.T, -1.0, 1.0)) / 2.0
        col_sum += block.sum(axis=0)
    sel_sim = np.zeros(n)
    available = np.ones(n, dtype=bool)
    picks: list[int] = []
    for _ in range(quota):
        gains = col_sum - lam * (2.0 * sel_sim + 1.0)  # diagonal of cosine_shifted is 1
        gains[~available] = -np.inf
        j = int(np.argmax(gains))
        picks.append(j)
        available[j] = False
        sel_sim += cosine_shifted_column(unit_rows, j)
    return picks


def submodular_select(features, labels: LabelVector, k: int, balanced: bool = False,
                      kind: str = "facility_location", lam: float = 0.5,
                      similarity: str = "cosine_shifted",
                      pairwise_cap: int = PAIRWISE_CAP, seed: int = 0,
                      fraction: float | None = None) -> CoresetResult:
    """Lazy-greedy submodular selection on per-pool similarities.

    Pools above ``pairwise_cap`` fall back to streaming gains, which only
    supports the default cosine_shifted similarity.
    """
    if kind not in OBJECTIVE_KINDS:
        raise ArtifactValidationError(f"unknown objective kind {kind!r}")
    x = features.data if isinstance(features, FeatureMatrix) else np.asarray(features)
    x = np.asarray(x, dtype=np.float64)
    picks = []
    for pool, quota, _ in selection_pools(labels, k, balanced):
        rows = x[pool]
        if len(pool) <= pairwise_cap:
            sim = similarity_from_features(rows, similarity, pairwise_cap)
            obj = SubmodularObjective(kind, sim.values, lam if kind == "graph_cut" else 0.0)
            local, _ = greedy_maximize(obj, quota, lazy=True)
        elif similarity != "cosine_shifted":
            raise NumericalError(
                f"pool of {len(pool)} exceeds cap {pairwise_cap}; streaming gains "
                f"support only cosine_shifted, not {similarity!r}"
            )
        else:
            unit = _unit_rows(rows, "features")
            if kind == "facility_location":
                local = _fl_greedy_streaming(unit, quota)
            else:
                local = _gc_greedy_streaming(unit, quota, lam)
        picks.extend(pool[j] for j in local)
    method = "fl" if kind == "facility_location" else "gc"
    return make_result(picks, np.ones(len(picks)), method,
                       fraction if fraction is not None else k / labels.n,
                       seed, labels.n, k)
