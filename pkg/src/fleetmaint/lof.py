"""Local Outlier Factor scoring of a query point against a reference window.

Standard construction: k-distance and k-nearest-neighbor sets under
Euclidean distance, reachability-distance(p, o) = max(k-distance(o),
d(p, o), reach_floor), local reachability density (lrd) = 1 / mean
reachability distance, score = mean over neighbors of lrd(o) / lrd(p).

Neighbor sets include every point at distance <= the k-distance, so ties
and duplicates enlarge the set; this keeps the score invariant under
window reordering.  Windows smaller than k+1 points score a neutral 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, SchemaMismatchError

DEFAULT_REACH_FLOOR = 1e-9


@dataclass(frozen=True)
class LofParams:
    k: int
    window_size: int
    reach_floor: float = DEFAULT_REACH_FLOOR

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if self.reach_floor <= 0:
            raise ValueError("reach_floor must be > 0")

    def to_payload(self) -> dict:
        return {"k": self.k, "window_size": self.window_size, "reach_floor": self.reach_floor}

    @classmethod
    def from_payload(cls, obj: dict) -> "LofParams":
        return cls(int(obj["k"]), int(obj["window_size"]), float(obj["reach_floor"]))


def _kth_smallest(values: np.ndarray, k: int) -> float:
    return float(np.partition(values, k - 1)[k - 1])


def lof_score(point: np.ndarray, window: Sequence[np.ndarray], params: LofParams) -> float:
    """Score ``point`` against ``window``; 1.0 while the window is warming up."""
    point = np.asarray(point, dtype=float)
    n = len(window)
    if n < params.k + 1:
        if not np.all(np.isfinite(point)):
            raise InvalidInputError("non-finite feature value in query point")
        return 1.0

    w = np.asarray(window, dtype=float)
    if w.ndim != 2 or w.shape[1] != point.shape[0]:
        raise SchemaMismatchError(
            f"window dimensionality {w.shape} does not match point {point.shape}"
        )
    if not (np.all(np.isfinite(point)) and np.all(np.isfinite(w))):
        raise InvalidInputError("non-finite feature value")

    k = params.k
    floor = params.reach_floor

    # pairwise distances within the window; row i excludes the diagonal
    diffs = w[:, None, :] - w[None, :, :]
    dmat = np.sqrt(np.einsum("ijk,ijk->ij", diffs, diffs))
    np.fill_diagonal(dmat, np.inf)
    kdist = np.partition(dmat, k - 1, axis=1)[:, k - 1]

    # neighbor mask: N_k(i) = every j != i with d(i, j) <= k-distance(i)
    mask = dmat <= kdist[:, None]
    reach = np.maximum(np.maximum(kdist[None, :], np.where(mask, dmat, 0.0)), floor)
    counts = mask.sum(axis=1)
    # mean reach distance per row as base + mean deviation: when every
    # reach value in a row equals the base (duplicate-point windows) the
    # deviation sum is exactly zero, so the mean is exact and the final
    # score collapses to exactly 1.0 instead of accumulating rounding
    base = np.where(mask, reach, np.inf).min(axis=1)
    dev = np.where(mask, reach - base[:, None], 0.0).sum(axis=1)
    mean_reach = base + dev / counts  # 1 / lrd(i)

    d_p = np.sqrt(np.einsum("ij,ij->i", w - point, w - point))
    kdist_p = _kth_smallest(d_p, k)
    neighbors_p = d_p <= kdist_p
    reach_p = np.maximum(np.maximum(kdist[neighbors_p], d_p[neighbors_p]), floor)
    base_p = float(np.min(reach_p))
    mean_reach_p = base_p + float(np.sum(reach_p - base_p)) / len(reach_p)
    ratios = mean_reach_p / mean_reach[neighbors_p]  # lrd(o) / lrd(p)
    return float(np.mean(ratios))
