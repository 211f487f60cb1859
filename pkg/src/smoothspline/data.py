from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import as_points


@dataclass(frozen=True)
class Dataset:
    """Design points X (n, d) with one response per point."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        X = as_points(X, X.shape[1] if X.ndim == 2 else 1)
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if Y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} design points but {Y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("design points and responses must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ReplicatedDataset:
    """Design points X (n, d) with r responses per point, Y of shape (n, r)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        X = as_points(X, X.shape[1] if X.ndim == 2 else 1)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} design points but {Y.shape[0]} response rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def r(self) -> int:
        return self.Y.shape[1]

    def collapse(self) -> Dataset:
        return Dataset(self.X, self.Y.mean(axis=1))
