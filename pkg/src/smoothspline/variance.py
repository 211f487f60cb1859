"""Estimates of the residual budget S_n.

With r replicates per design point the fit uses the row means, whose
variance is Var(Y|X)/r; the replicate estimator averages the per-row
sample variances and divides by r.  Without replicates the domain box is
cut into k^d cells and the within-cell sample variances are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, ReplicatedDataset


def replicate_s_n(data: ReplicatedDataset) -> tuple[float, Dataset]:
    """Return (S_n estimate, dataset of row means)."""
    if data.r < 2:
        raise ValueError(f"need at least 2 replicates per point, got r={data.r}")
    s_i = np.var(data.Y, axis=1, ddof=1)
    return float(s_i.sum() / (data.n * data.r)), data.collapse()


@dataclass(frozen=True)
class PartitionEstimate:
    s_n: float
    cell_variances: dict[tuple[int, ...], float]
    cell_counts: dict[tuple[int, ...], int]
    excluded: tuple[tuple[int, ...], ...]


def _cell_index(X: np.ndarray, k: int, lo: float, hi: float) -> np.ndarray:
    # half-open cells [lo, hi); the last cell is closed on the right
    idx = np.floor((X - lo) / (hi - lo) * k).astype(int)
    return np.clip(idx, 0, k - 1)


def partition_estimate(data: Dataset, k: int = 5, domain=None, weights=None) -> PartitionEstimate:
    if k < 1:
        raise ValueError(f"cell count per axis must be positive, got {k}")
    lo, hi = (float(data.X.min()), float(data.X.max())) if domain is None else map(float, domain)
    if not hi > lo:
        raise ValueError(f"degenerate domain [{lo}, {hi}]")
    idx = _cell_index(data.X, k, lo, hi)
    groups: dict[tuple[int, ...], list[float]] = {}
    for cell, y in zip(map(tuple, idx), data.Y):
        groups.setdefault(cell, []).append(y)

    variances, counts, excluded = {}, {}, []
    for cell in sorted(groups):
        ys = groups[cell]
        counts[cell] = len(ys)
        if len(ys) < 2:
            excluded.append(cell)
        else:
            variances[cell] = float(np.var(ys, ddof=1))
    if not variances:
        raise ValueError("every nonempty cell has fewer than 2 points")

    cells = list(variances)
    vals = np.array([variances[c] for c in cells])
    if weights is None:
        s_n = float(vals.mean())
    else:
        w_all = np.asarray(weights, dtype=float).reshape((k,) * data.d)
        w = np.array([w_all[c] for c in cells])
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("cell weights must be nonnegative with a positive sum over used cells")
        s_n = float(w @ vals / w.sum())
    return PartitionEstimate(s_n, variances, counts, tuple(excluded))


def partition_s_n(data: Dataset, k: int = 5, domain=None, weights=None) -> float:
    return partition_estimate(data, k, domain, weights).s_n
