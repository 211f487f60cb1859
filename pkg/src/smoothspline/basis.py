"""Monomial basis of the polynomials of total degree < m, anchors and cardinal polynomials."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import InvalidOrderError, NotUnisolventError

RANK_RTOL = 1e-10


@dataclass(frozen=True, order=True)
class MultiIndex:
    exponents: tuple[int, ...]

    def __post_init__(self):
        if any(int(e) != e or e < 0 for e in self.exponents):
            raise ValueError(f"multi-index exponents must be nonnegative integers, got {self.exponents}")
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))

    @property
    def order(self) -> int:
        return sum(self.exponents)

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def __str__(self):
        return "(" + ",".join(str(e) for e in self.exponents) + ")"


def as_multi_index(alpha, d: int) -> MultiIndex:
    """Coerce an int (d == 1 only), a sequence of ints or a MultiIndex."""
    if isinstance(alpha, MultiIndex):
        mi = alpha
    elif isinstance(alpha, (int, np.integer)):
        if d != 1:
            raise ValueError(f"an integer derivative order is ambiguous for d={d}; pass a {d}-tuple")
        mi = MultiIndex((int(alpha),))
    else:
        mi = MultiIndex(tuple(alpha))
    if mi.dim != d:
        raise ValueError(f"multi-index {mi} has dimension {mi.dim}, expected {d}")
    return mi


def basis_size(m: int, d: int) -> int:
    return comb(m + d - 1, d)


def check_order(m: int, d: int) -> None:
    if m < 1 or d < 1:
        raise InvalidOrderError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    if 2 * m <= d:
        raise InvalidOrderError(f"need 2m > d for a continuous function space, got m={m}, d={d}")


def eval_monomial(alpha: MultiIndex, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (alpha.dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({alpha.dim},)")
    return float(np.prod(x ** np.asarray(alpha.exponents)))


def _deriv_factor(e: np.ndarray, a: np.ndarray) -> tuple[float, np.ndarray] | None:
    """Coefficient and exponents of D^a x^e, or None when it vanishes."""
    if np.any(a > e):
        return None
    coef = 1.0
    for ej, aj in zip(e, a):
        for k in range(aj):
            coef *= ej - k
    return coef, e - a


@dataclass(frozen=True)
class PolyBasis:
    m: int
    d: int
    indices: tuple[MultiIndex, ...]

    @classmethod
    def create(cls, m: int, d: int) -> PolyBasis:
        check_order(m, d)
        exps = [e for e in itertools.product(range(m), repeat=d) if sum(e) <= m - 1]
        # graded lexicographic: by degree, then larger power of x_1 first
        exps.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
        return cls(m, d, tuple(MultiIndex(e) for e in exps))

    @property
    def size(self) -> int:
        return len(self.indices)

    def _exponent_array(self) -> np.ndarray:
        return np.array([a.exponents for a in self.indices], dtype=int).reshape(self.size, self.d)

    def evaluate(self, X) -> np.ndarray:
        """Matrix [p_k(x_j)] of shape (len(X), M)."""
        X = as_points(X, self.d)
        E = self._exponent_array()
        return np.prod(X[:, None, :] ** E[None, :, :], axis=2)

    def derivative(self, X, alpha) -> np.ndarray:
        """Matrix [D^alpha p_k(x_j)] of shape (len(X), M)."""
        X = as_points(X, self.d)
        alpha = as_multi_index(alpha, self.d)
        a = np.asarray(alpha.exponents)
        out = np.zeros((X.shape[0], self.size))
        for k, idx in enumerate(self.indices):
            res = _deriv_factor(np.asarray(idx.exponents), a)
            if res is None:
                continue
            coef, e = res
            out[:, k] = coef * np.prod(X ** e[None, :], axis=1)
        return out


def monomial_basis(m: int, d: int) -> PolyBasis:
    return PolyBasis.create(m, d)


def as_points(X, d: int | None = None) -> np.ndarray:
    """Normalize input to a float array of shape (n, d).

    A 1-D array is read as n scalar points when d == 1 (or d is None) and
    as a single point when d > 1.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None] if d in (None, 1) else X[None, :]
    if X.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise ValueError(f"points have dimension {X.shape[1]}, expected {d}")
    return X


def _numerical_rank(A: np.ndarray) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0 or not np.isfinite(s[0]):
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def check_unisolvent(points, m: int) -> bool:
    X = np.asarray(points, dtype=float)
    if X.size == 0:
        return False
    X = as_points(X)
    basis = PolyBasis.create(m, X.shape[1]) if 2 * m > X.shape[1] else None
    if basis is None or X.shape[0] < basis.size:
        return False
    return _numerical_rank(basis.evaluate(X)) == basis.size


@dataclass(frozen=True)
class AnchorSet:
    points: np.ndarray  # (M, d)
    cardinal_coeffs: np.ndarray  # (M, M); q_i(x) = sum_k C[k, i] p_k(x)

    @classmethod
    def from_points(cls, points, basis: PolyBasis) -> AnchorSet:
        S = as_points(points, basis.d)
        if S.shape[0] != basis.size:
            raise NotUnisolventError(f"need exactly M={basis.size} anchors, got {S.shape[0]}")
        A = basis.evaluate(S)
        if _numerical_rank(A) < basis.size:
            raise NotUnisolventError("anchor points are not unisolvent")
        C = np.linalg.inv(A)
        S.setflags(write=False)
        C.setflags(write=False)
        return cls(S, C)

    def cardinal(self, X, basis: PolyBasis) -> np.ndarray:
        """Matrix [q_i(x_j)] of shape (len(X), M)."""
        return basis.evaluate(X) @ self.cardinal_coeffs

    def cardinal_derivative(self, X, alpha, basis: PolyBasis) -> np.ndarray:
        return basis.derivative(X, alpha) @ self.cardinal_coeffs


def _lattice(lo: float, hi: float, d: int, max_level: int):
    """Corners first, then each dyadic refinement of the box, lexicographic within a level."""
    seen = set()
    for level in range(max_level + 1):
        ticks = 2**level + 1
        for ijk in itertools.product(range(ticks), repeat=d):
            key = tuple(i * 2 ** (max_level - level) for i in ijk)
            if key in seen:
                continue
            seen.add(key)
            yield np.array([lo + (hi - lo) * i / (ticks - 1) for i in ijk])


def choose_anchors(domain: tuple[float, float], m: int, d: int, *, seed: int = 0, retries: int = 10) -> AnchorSet:
    """Pick M unisolvent anchor points inside [a, b]^d.

    Lattice points are taken in order and kept only if they raise the rank
    of the monomial matrix; a seeded jitter is the fallback.
    """
    basis = PolyBasis.create(m, d)
    lo, hi = map(float, domain)
    if not hi > lo:
        raise ValueError(f"empty domain [{lo}, {hi}]")
    M = basis.size
    max_level = max(1, int(np.ceil(np.log2(max(m, 2)))) + 1)
    chosen: list[np.ndarray] = []
    for pt in _lattice(lo, hi, d, max_level):
        trial = chosen + [pt]
        if _numerical_rank(basis.evaluate(np.array(trial))) == len(trial):
            chosen = trial
            if len(chosen) == M:
                return AnchorSet.from_points(np.array(chosen), basis)

    rng = np.random.default_rng(seed)
    base = np.array(list(itertools.islice(_lattice(lo, hi, d, max_level), M)))
    for _ in range(retries):
        pts = np.clip(base + 1e-3 * (hi - lo) * rng.standard_normal(base.shape), lo, hi)
        if check_unisolvent(pts, m):
            return AnchorSet.from_points(pts, basis)
    raise NotUnisolventError(f"no unisolvent anchor set found for m={m}, d={d} on [{lo}, {hi}]")
