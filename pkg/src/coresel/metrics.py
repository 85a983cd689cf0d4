"""Pairwise distance and similarity kernels.

Shared by the geometric, boundary and submodular methods. Everything is a
pure function of immutable inputs computed in float64 with a fixed reduction
order, so results do not depend on how work is scheduled.

Full n x n matrices are only materialized up to ``pairwise_cap`` rows
(default 20000); the row helpers at the bottom let k-center and the
streaming facility-location greedy compute one row/column at a time above
the cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .artifact import FeatureMatrix
from .errors import ArtifactValidationError, NumericalError

DISTANCE_METRICS = ("euclidean", "cosine", "sym_kl")
SIMILARITY_KINDS = ("cosine_shifted", "rbf", "neg_euclidean_shifted")

KL_FLOOR = 1e-12
PAIRWISE_CAP = 20000


@dataclass
class DistanceMatrix:
    """n x m nonnegative distances; self-distance is 0 for every metric."""

    values: np.ndarray
    metric: str


@dataclass
class SimilarityMatrix:
    """n x n symmetric nonnegative similarities."""

    values: np.ndarray
    kind: str

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _rows(x) -> np.ndarray:
    data = x.data if isinstance(x, FeatureMatrix) else np.asarray(x)
    if data.ndim != 2:
        raise ArtifactValidationError(f"expected a 2-D array, got rank {data.ndim}")
    return np.asarray(data, dtype=np.float64)


def _check_probability_rows(p: np.ndarray, side: str) -> None:
    if np.any(p < -1e-9):
        bad = int(np.argwhere((p < -1e-9).any(axis=1))[0][0])
        raise NumericalError(f"sym_kl: row {bad} of {side} has negative entries")
    sums = p.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > 1e-4):
        bad = int(np.argmax(off))
        raise NumericalError(
            f"sym_kl: row {bad} of {side} is not a probability vector (sums to {sums[bad]:.6g})"
        )


def _unit_rows(x: np.ndarray, side: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        bad = int(np.argmax(norms == 0))
        raise NumericalError(f"cosine: row {bad} of {side} has zero norm")
    return x / norms[:, None]


def _sym_kl(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # sum_k (a_k - b_k) * (ln a_k - ln b_k), probabilities floored before logs
    la = np.log(np.maximum(a, KL_FLOOR))
    lb = np.log(np.maximum(b, KL_FLOOR))
    sa = np.einsum("ik,ik->i", a, la)
    sb = np.einsum("jk,jk->j", b, lb)
    vals = sa[:, None] + sb[None, :] - a @ lb.T - la @ b.T
    return np.maximum(vals, 0.0)


def pairwise_distance(a, b, metric: str = "euclidean") -> DistanceMatrix:
    """All-pairs distances between rows of ``a`` and rows of ``b``.

    euclidean is the l2 norm of the difference, cosine is 1 - cos angle, and
    sym_kl is KL(a||b) + KL(b||a) on probability rows (softmax outputs).
    """
    if metric not in DISTANCE_METRICS:
        raise ArtifactValidationError(f"unknown distance metric {metric!r}")
    xa, xb = _rows(a), _rows(b)
    if xa.shape[1] != xb.shape[1]:
        raise ArtifactValidationError(
            f"dimension mismatch: {xa.shape[1]} vs {xb.shape[1]} columns"
        )
    if metric == "euclidean":
        vals = cdist(xa, xb, metric="euclidean")
    elif metric == "cosine":
        ua, ub = _unit_rows(xa, "A"), _unit_rows(xb, "B")
        vals = 1.0 - np.clip(ua @ ub.T, -1.0, 1.0)
        vals = np.maximum(vals, 0.0)
    else:
        _check_probability_rows(xa, "A")
        _check_probability_rows(xb, "B")
        vals = _sym_kl(xa, xb)
    return DistanceMatrix(vals, metric)


def median_offdiag_distance(dist: np.ndarray) -> float:
    iu = np.triu_indices(dist.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    med = float(np.median(dist[iu]))
    return med if med > 0 else 1.0


def similarity_from_features(a, kind: str = "cosine_shifted",
                             pairwise_cap: int = PAIRWISE_CAP) -> SimilarityMatrix:
    """Dense n x n similarity matrix from feature rows.

    cosine_shifted maps cosine similarity into [0, 1]; rbf uses the median
    off-diagonal distance as bandwidth; neg_euclidean_shifted subtracts every
    distance from the global maximum so all entries are nonnegative.
    """
    if kind not in SIMILARITY_KINDS:
        raise ArtifactValidationError(f"unknown similarity kind {kind!r}")
    x = _rows(a)
    n = x.shape[0]
    if n > pairwise_cap:
        raise NumericalError(
            f"n={n} exceeds the dense pairwise cap {pairwise_cap}; "
            "use the streaming selection paths instead"
        )
    if kind == "cosine_shifted":
        u = _unit_rows(x, "A")
        vals = (1.0 + np.clip(u @ u.T, -1.0, 1.0)) / 2.0
    elif kind == "rbf":
        dist = cdist(x, x, metric="euclidean")
        sigma = median_offdiag_distance(dist)
        vals = np.exp(-(dist**2) / (2.0 * sigma**2))
    else:
        dist = cdist(x, x, metric="euclidean")
        vals = dist.max() - dist
    vals = (vals + vals.T) / 2.0
    if kind in ("cosine_shifted", "rbf"):
        np.fill_diagonal(vals, 1.0)
    return SimilarityMatrix(np.maximum(vals, 0.0), kind)


# -- row/column helpers for streaming consumers ------------------------------

def distance_row(x: np.ndarray, i: int, metric: str = "euclidean") -> np.ndarray:
    """Distances from row ``i`` of ``x`` to every row, without an n x n matrix."""
    if metric == "euclidean":
        return np.linalg.norm(x - x[i], axis=1)
    if metric == "sym_kl":
        return _sym_kl(x[i : i + 1], x)[0]
    raise ArtifactValidationError(f"no streaming rule for metric {metric!r}")


def cosine_shifted_column(unit_rows: np.ndarray, j: int) -> np.ndarray:
    """One column of the cosine_shifted similarity built from unit-norm rows."""
    col = (1.0 + np.clip(unit_rows @ unit_rows[j], -1.0, 1.0)) / 2.0
    col[j] = 1.0
    return col
