"""Smoothing-spline estimators under a roughness budget, a residual budget or a penalty.

Problem A:  minimize E_n(f)            subject to J(f) <= U
Problem B:  minimize J(f)              subject to E_n(f) <= S
Problem C:  minimize E_n(f) + lam J(f)

On the nondegenerate ranges the solutions of A and B lie on the lam-path
of C, where J decreases and E_n increases strictly with lam.  A and B are
therefore solved by bisection on log(lam) until the active constraint is
met to a relative tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .basis import check_unisolvent
from .data import Dataset
from .errors import NotUnisolventError, RootFindingError
from .kernel import SplineSetup
from .model import SplineModel
from .system import Coefficients, DesignMatrices, assemble, fitted_values, quad_form, solve_penalized

log = logging.getLogger(__name__)

BRACKET = (1e-14, 1e6)
MAX_EXPANSIONS = 60
MAX_ITER = 200
REL_TOL = 1e-6

INTERPOLANT_REGIME = "interpolant_regime"
POLYNOMIAL_REGIME = "polynomial_regime"


class Problem(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    INTERP = "INTERP"
    POLY = "POLY"


@dataclass(frozen=True)
class FitRequest:
    problem: Problem
    budget: float | None = None

    def __post_init__(self):
        if not isinstance(self.problem, Problem):
            object.__setattr__(self, "problem", Problem(str(self.problem).upper()))
        if self.problem in (Problem.A, Problem.B, Problem.C):
            if self.budget is None or not self.budget >= 0:
                raise ValueError(f"problem {self.problem.value} needs a nonnegative budget, got {self.budget}")


@dataclass(frozen=True)
class FitResult:
    model: SplineModel
    achieved_J: float
    achieved_En: float
    lambda_star: float
    iterations: int = 0
    edge_case: str | None = None
    problem: Problem = Problem.C
    budget: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def fitted(self) -> np.ndarray:
        return self.diagnostics["fitted"]


class _Path:
    """Solutions of Problem C along lam for one dataset, sharing the design matrices."""

    def __init__(self, data: Dataset, setup: SplineSetup, dm: DesignMatrices | None = None):
        _check_sizes(data, setup)
        self.data = data
        self.setup = setup
        self.dm = dm if dm is not None else assemble(data.X, setup)
        self.calls = 0

    def solve(self, lam: float) -> tuple[Coefficients, np.ndarray, float, float]:
        self.calls += 1
        coef = solve_penalized(self.dm, self.data.Y, lam)
        fit = fitted_values(self.dm, coef)
        J = max(quad_form(self.dm, coef.d), 0.0)
        En = float(np.mean((self.data.Y - fit) ** 2))
        return coef, fit, J, En

    def result(self, lam: float, problem: Problem, budget, edge_case=None, solved=None) -> FitResult:
        coef, fit, J, En = solved if solved is not None else self.solve(lam)
        model = SplineModel(self.setup, self.data.X, coef.c, coef.d, lam, J, En)
        diag = dict(coef.diagnostics)
        diag["fitted"] = fit
        return FitResult(model, J, En, lam, self.calls, edge_case, problem, budget, diag)


def _check_sizes(data: Dataset, setup: SplineSetup) -> None:
    if data.d != setup.d:
        raise ValueError(f"data dimension {data.d} does not match setup dimension {setup.d}")
    if data.n < setup.M:
        raise NotUnisolventError(f"need at least M={setup.M} design points for m={setup.m}, d={setup.d}; got {data.n}")


def _require_unisolvent(data: Dataset, setup: SplineSetup) -> None:
    if not check_unisolvent(data.X, setup.m):
        raise NotUnisolventError(f"design points are not unisolvent for polynomials of degree < {setup.m}")


def fit_problem_c(data: Dataset, lam: float, setup: SplineSetup) -> FitResult:
    if lam == 0:
        return interpolant(data, setup)
    if not lam > 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return _Path(data, setup).result(lam, Problem.C, lam)


def interpolant(data: Dataset, setup: SplineSetup, path: _Path | None = None) -> FitResult:
    """Minimum-roughness exact interpolant f_1."""
    path = path if path is not None else _Path(data, setup)
    _require_unisolvent(data, setup)
    return path.result(0.0, Problem.INTERP, None, INTERPOLANT_REGIME)


def poly_least_squares(data: Dataset, setup: SplineSetup) -> FitResult:
    """Least-squares polynomial f_P of degree < m (least-norm when rank deficient)."""
    if data.d != setup.d:
        raise ValueError(f"data dimension {data.d} does not match setup dimension {setup.d}")
    if data.n < 1:
        raise ValueError("need at least one observation")
    P = setup.basis.evaluate(data.X)
    c, *_ = np.linalg.lstsq(P, data.Y, rcond=None)
    fit = P @ c
    En = float(np.mean((data.Y - fit) ** 2))
    model = SplineModel(setup, data.X, c, np.zeros(data.n), math.inf, 0.0, En)
    return FitResult(model, 0.0, En, math.inf, 0, POLYNOMIAL_REGIME, Problem.POLY, None, {"fitted": fit})


def _bisect_log_lambda(
    func: Callable[[float], tuple], target: float, increasing: bool, what: str
) -> tuple[float, tuple]:
    """Find lam with func(lam)[1] == target (relative REL_TOL); func(lam)[1] is monotone in lam."""

    def val(lam):
        return func(lam)

    def below(v):  # the lam side where v has not yet reached target
        return v < target if increasing else v > target

    def close(v):
        return abs(v - target) <= REL_TOL * target

    lo, hi = BRACKET
    out_lo, v_lo = val(lo)
    for _ in range(MAX_EXPANSIONS):
        if close(v_lo):
            return lo, out_lo
        if below(v_lo):
            break
        lo, hi = lo * 1e-3, lo
        out_lo, v_lo = val(lo)
    else:
        raise RootFindingError(f"could not bracket {what} = {target:.6g} from below", (lo, hi))

    out_hi, v_hi = val(hi)
    for _ in range(MAX_EXPANSIONS):
        if close(v_hi):
            return hi, out_hi
        if not below(v_hi):
            break
        lo, hi = hi, hi * 1e3
        out_hi, v_hi = val(hi)
    else:
        raise RootFindingError(f"could not bracket {what} = {target:.6g} from above", (lo, hi))

    for _ in range(MAX_ITER):
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        out_mid, v_mid = val(mid)
        if close(v_mid):
            return mid, out_mid
        if below(v_mid):
            lo = mid
        else:
            hi = mid
    raise RootFindingError(f"bisection did not reach {what} = {target:.6g} within tolerance {REL_TOL:g}", (lo, hi))


def fit_problem_a(data: Dataset, U: float, setup: SplineSetup) -> FitResult:
    if not U >= 0:
        raise ValueError(f"roughness budget must be >= 0, got {U}")
    if U == 0:
        res = poly_least_squares(data, setup)
        return _retag(res, Problem.A, U)
    path = _Path(data, setup)
    f1 = interpolant(data, setup, path)
    if U >= f1.achieved_J:
        return _retag(f1, Problem.A, U)
    def roughness(lam):
        solved = path.solve(lam)
        return solved, solved[2]

    lam, solved = _bisect_log_lambda(roughness, U, increasing=False, what="J")
    res = path.result(lam, Problem.A, U, solved=solved)
    res.diagnostics["J_interpolant"] = f1.achieved_J
    return res


def fit_problem_b(data: Dataset, S: float, setup: SplineSetup) -> FitResult:
    if not S >= 0:
        raise ValueError(f"residual budget must be >= 0, got {S}")
    path = _Path(data, setup)
    if S == 0:
        return _retag(interpolant(data, setup, path), Problem.B, S)
    fp = poly_least_squares(data, setup)
    if S >= fp.achieved_En:
        return _retag(fp, Problem.B, S)
    _require_unisolvent(data, setup)
    def residual(lam):
        solved = path.solve(lam)
        return solved, solved[3]

    lam, solved = _bisect_log_lambda(residual, S, increasing=True, what="E_n")
    res = path.result(lam, Problem.B, S, solved=solved)
    res.diagnostics["En_polynomial"] = fp.achieved_En
    return res


def _retag(res: FitResult, problem: Problem, budget) -> FitResult:
    return FitResult(
        res.model, res.achieved_J, res.achieved_En, res.lambda_star, res.iterations,
        res.edge_case, problem, budget, res.diagnostics,
    )


def psi_n(data: Dataset, u: float, setup: SplineSetup) -> float:
    """Smallest mean squared residual attainable with roughness at most u."""
    return fit_problem_a(data, u, setup).achieved_En


def duality_roundtrip(data: Dataset, S: float, setup: SplineSetup) -> tuple[FitResult, FitResult]:
    """Fit B at S, then A at U = J of that fit; returns (B result, A result)."""
    g = fit_problem_b(data, S, setup)
    f = fit_problem_a(data, g.achieved_J, setup)
    return g, f


def default_cv_grid(lo_exp: int = -11, hi_exp: int = 0) -> list[float]:
    """{1e-11, 5e-11, 1e-10, 5e-10, ..., 1e-1, 5e-1, 1}."""
    grid = []
    for e in range(lo_exp, hi_exp):
        grid += [10.0**e, 5 * 10.0**e]
    return grid + [10.0**hi_exp]


def cross_validate(data: Dataset, lambda_grid: Sequence[float] | None, setup: SplineSetup) -> tuple[float, list[float]]:
    """Leave-one-out score V(lam) on a grid (default_cv_grid() when None); ties go to the larger lam."""
    grid = [float(v) for v in (default_cv_grid() if lambda_grid is None else lambda_grid)]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(not v > 0 for v in grid):
        raise ValueError("lambda grid values must be positive")
    _check_sizes(data, setup)
    n = data.n
    if n < setup.M + 1:
        raise NotUnisolventError(f"cross-validation needs n >= M + 1 = {setup.M + 1}, got {n}")
    dm = assemble(data.X, setup)
    subsets = []
    for k in range(n):
        keep = np.delete(np.arange(n), k)
        if not check_unisolvent(data.X[keep], setup.m):
            raise NotUnisolventError(f"design without point {k} is not unisolvent")
        subsets.append((keep, dm.subset(keep)))

    scores = []
    for lam in grid:
        sq = 0.0
        for k, (keep, sub) in enumerate(subsets):
            # the left-out point keeps the 1/n weight of the full sample
            coef = solve_penalized(sub, data.Y[keep], lam, n_scale=n)
            pred = dm.Pmat[k] @ coef.c + dm.Rmat[k, keep] @ coef.d
            sq += (data.Y[k] - pred) ** 2
        scores.append(sq / n)

    best = min(scores)
    tol = 1e-12 * max(abs(best), np.finfo(float).tiny)
    lam_cv = max(lam for lam, s in zip(grid, scores) if s <= best + tol)
    return lam_cv, scores


def fit_problem_c_cv(data: Dataset, lambda_grid: Sequence[float] | None, setup: SplineSetup) -> FitResult:
    lam_cv, scores = cross_validate(data, lambda_grid, setup)
    res = fit_problem_c(data, lam_cv, setup)
    res.diagnostics["cv_scores"] = scores
    return res


def fit(data: Dataset, request: FitRequest, setup: SplineSetup) -> FitResult:
    if request.problem is Problem.A:
        return fit_problem_a(data, request.budget, setup)
    if request.problem is Problem.B:
        return fit_problem_b(data, request.budget, setup)
    if request.problem is Problem.C:
        return fit_problem_c(data, request.budget, setup)
    if request.problem is Problem.INTERP:
        return interpolant(data, setup)
    return poly_least_squares(data, setup)
