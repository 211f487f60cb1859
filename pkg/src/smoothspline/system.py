"""Design matrices and the bordered linear system for penalized least squares.

The stationarity conditions of  (1/n)|Y - Pc - Rd|^2 + lam d'Rd  are

    (R + n lam I) d + P c = Y,     P' d = 0,

solved here as one symmetric indefinite system with a pivoted LDL'
factorization (LAPACK sytrf/sytrs) plus iterative refinement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack
from scipy.spatial.distance import pdist

from .basis import as_points
from .errors import DuplicatePointError, SingularSystemError
from .kernel import SplineSetup, r_matrix

log = logging.getLogger(__name__)

RESIDUAL_RTOL = 1e-8
REFINE_STEPS = 3


@dataclass(frozen=True)
class DesignMatrices:
    X: np.ndarray
    Rmat: np.ndarray
    Pmat: np.ndarray

    @property
    def n(self) -> int:
        return self.Rmat.shape[0]

    @property
    def M(self) -> int:
        return self.Pmat.shape[1]

    def subset(self, keep: np.ndarray) -> DesignMatrices:
        """Matrices for a subset of the rows; R(X_i, X_j) does not depend on the other points."""
        return DesignMatrices(self.X[keep], self.Rmat[np.ix_(keep, keep)], self.Pmat[keep])


@dataclass(frozen=True)
class Coefficients:
    c: np.ndarray
    d: np.ndarray
    residual: float = 0.0
    ridge: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def find_duplicate(X: np.ndarray) -> tuple[int, int] | None:
    n = X.shape[0]
    if n < 2:
        return None
    dist = pdist(X)
    hits = np.flatnonzero(dist == 0.0)
    if hits.size == 0:
        return None
    rows, cols = np.triu_indices(n, 1)
    return int(rows[hits[0]]), int(cols[hits[0]])


def assemble(X, setup: SplineSetup) -> DesignMatrices:
    X = as_points(X, setup.d)
    dup = find_duplicate(X)
    if dup is not None:
        raise DuplicatePointError(*dup)
    R = r_matrix(X, X, setup.kernel)
    R = 0.5 * (R + R.T)
    P = setup.basis.evaluate(X)
    return DesignMatrices(X, R, P)


def _factor_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    lu, ipiv, info = lapack.dsytrf(A, lower=1)
    if info != 0:
        return None
    x, info = lapack.dsytrs(lu, ipiv, b, lower=1)
    if info != 0 or not np.all(np.isfinite(x)):
        return None
    for _ in range(REFINE_STEPS):
        r = b - A @ x
        dx, info = lapack.dsytrs(lu, ipiv, r, lower=1)
        if info != 0 or not np.all(np.isfinite(dx)):
            break
        x = x + dx
    return x


def solve_penalized(dm: DesignMatrices, Y, lam: float, *, n_scale: int | None = None) -> Coefficients:
    """Solve the bordered system for (c, d) at smoothing parameter lam.

    ``n_scale`` overrides the n multiplying lam; leave-one-out refits use
    it to keep the 1/n normalization of the full sample.
    """
    if lam < 0 or not np.isfinite(lam):
        raise ValueError(f"smoothing parameter must be finite and >= 0, got {lam}")
    Y = np.asarray(Y, dtype=float)
    n, M = dm.n, dm.M
    if Y.shape != (n,):
        raise ValueError(f"expected {n} responses, got shape {Y.shape}")
    nl = (n if n_scale is None else n_scale) * lam

    # equilibrate the polynomial block; c is rescaled back afterwards
    col = np.linalg.norm(dm.Pmat, axis=0)
    col[col == 0] = 1.0
    Ps = dm.Pmat / col
    # and scale the kernel block to unit size; d is rescaled back as well
    rs = float(np.max(np.abs(dm.Rmat))) + nl
    rs = rs if rs > 0 else 1.0
    A = np.zeros((n + M, n + M))
    A[:n, :n] = dm.Rmat / rs
    A[np.diag_indices(n)] += nl / rs
    A[:n, n:] = Ps
    A[n:, :n] = Ps.T
    b = np.concatenate([Y, np.zeros(M)])

    ridge = 0.0
    sol = _factor_solve(A, b)
    if sol is None:
        ridge = 1e-10 * max(np.trace(dm.Rmat), np.finfo(float).tiny) / n
        log.info("bordered system factorization failed; retrying with ridge %.3g", ridge)
        A[np.diag_indices(n)] += ridge / rs
        sol = _factor_solve(A, b)
        if sol is None:
            raise SingularSystemError(f"bordered system of size {n + M} is numerically singular at lam={lam:.3g}")
    d = sol[:n] / rs
    c = sol[n:] / col
    resid = float(np.linalg.norm((dm.Rmat + nl * np.eye(n)) @ d + dm.Pmat @ c - Y))
    orth = float(np.linalg.norm(dm.Pmat.T @ d))
    dscale = float(np.linalg.norm(dm.Pmat) * np.linalg.norm(d))
    diag = {
        "ridge_fallback": ridge > 0,
        "relative_residual": resid / max(float(np.linalg.norm(Y)), np.finfo(float).tiny),
        "relative_orthogonality": orth / dscale if dscale > 0 else 0.0,
    }
    if diag["relative_residual"] > RESIDUAL_RTOL:
        log.debug("bordered system residual %.3g exceeds %.1g * |Y|", diag["relative_residual"], RESIDUAL_RTOL)
    return Coefficients(c, d, resid, ridge, diag)


def fitted_values(dm: DesignMatrices, coef: Coefficients) -> np.ndarray:
    return dm.Pmat @ coef.c + dm.Rmat @ coef.d


def quad_form(dm: DesignMatrices, d: np.ndarray) -> float:
    return float(d @ dm.Rmat @ d)
