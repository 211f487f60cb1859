"""Radial kernel K_m, its normalizing constant and the projected reproducing kernel R.

R(s, t) is K_m projected off the polynomials of degree < m through the
cardinal polynomials of an anchor set, so that R(s_j, .) == 0 for every
anchor s_j.  All matrix builders are vectorized over point sets and
differentiate in the first argument only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import AnchorSet, MultiIndex, PolyBasis, as_multi_index, as_points, check_order, choose_anchors
from .errors import UnsupportedDerivativeError

SINGULAR_RADIUS = 1e-12


class SingularEvaluationWarning(UserWarning):
    """A kernel derivative was requested at a radius where it has no limit."""


def _gamma_neg_half(k: int) -> float:
    # Gamma(1/2 - k) by reflection against Gamma(1/2 + k)
    return (-4.0) ** k * math.factorial(k) * math.sqrt(math.pi) / math.factorial(2 * k)


def theta(m: int, d: int) -> float:
    check_order(m, d)
    if (2 * m - d) % 2 == 0:
        h = d // 2
        return (-1.0) ** (h + 1) / (
            2.0 ** (2 * m - 1) * math.pi**h * math.factorial(m - 1) * math.factorial(m - h)
        )
    gam = _gamma_neg_half(m - (d - 1) // 2)
    return (-1.0) ** m * gam / (2.0 ** (2 * m) * math.pi ** (d / 2) * math.factorial(m - 1))


def max_derivative_order(m: int, d: int) -> int:
    return 2 * m - 2 if d == 1 else 2


@dataclass(frozen=True)
class KernelSpec:
    m: int
    d: int
    basis: PolyBasis
    anchors: AnchorSet
    theta: float = field(init=False)
    even: bool = field(init=False)

    def __post_init__(self):
        check_order(self.m, self.d)
        object.__setattr__(self, "theta", theta(self.m, self.d))
        object.__setattr__(self, "even", (2 * self.m - self.d) % 2 == 0)

    @property
    def power(self) -> int:
        return 2 * self.m - self.d

    @property
    def sign(self) -> float:
        return -1.0 if self.m % 2 else 1.0

    @cached_property
    def anchor_gram(self) -> np.ndarray:
        S = self.anchors.points
        return k_m_array(S[:, None, :] - S[None, :, :], self)


def k_m_array(Z: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """K_m evaluated on an array of difference vectors of shape (..., d)."""
    r = np.linalg.norm(Z, axis=-1)
    k = spec.power
    out = np.zeros_like(r)
    nz = r > 0
    rn = r[nz]
    if spec.even:
        out[nz] = spec.theta * rn**k * np.log(rn)
    else:
        out[nz] = spec.theta * rn**k
    return out


def k_m(z, spec: KernelSpec) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return float(k_m_array(z, spec))


def _check_alpha(alpha: MultiIndex, spec: KernelSpec) -> None:
    limit = max_derivative_order(spec.m, spec.d)
    if alpha.order > limit:
        raise UnsupportedDerivativeError(
            f"derivative order {alpha.order} exceeds the supported maximum {limit} for m={spec.m}, d={spec.d}"
        )


def _deriv_1d(Z: np.ndarray, p: int, spec: KernelSpec) -> np.ndarray:
    # d == 1 is always the odd branch: theta |z|^k with k = 2m - 1
    z = Z[..., 0]
    k = spec.power
    coef = spec.theta * math.perm(k, p)
    return coef * np.abs(z) ** (k - p) * np.sign(z) ** p


def _radial_factors(r: np.ndarray, spec: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """h1 = g'(r)/r and h2 = (g''(r) - g'(r)/r)/r^2 for the radial profile g; r > 0."""
    k, th = spec.power, spec.theta
    if spec.even:
        lr = np.log(r)
        h1 = th * r ** (k - 2) * (k * lr + 1.0)
        h2 = th * r ** (k - 4) * (k * (k - 2) * lr + 2.0 * k - 2.0)
    else:
        h1 = th * k * r ** (k - 2.0)
        h2 = th * k * (k - 2) * r ** (k - 4.0)
    return h1, h2


def kernel_deriv_array(Z: np.ndarray, alpha: MultiIndex, spec: KernelSpec) -> np.ndarray:
    """D^alpha K_m on difference vectors of shape (..., d)."""
    _check_alpha(alpha, spec)
    if alpha.order == 0:
        return k_m_array(Z, spec)
    if spec.d == 1:
        return _deriv_1d(Z, alpha.order, spec)

    r = np.linalg.norm(Z, axis=-1)
    out = np.zeros_like(r)
    nz = r > SINGULAR_RADIUS
    h1, h2 = _radial_factors(r[nz], spec)
    idx = [j for j, e in enumerate(alpha.exponents) for _ in range(e)]
    Znz = Z[nz]
    if alpha.order == 1:
        out[nz] = h1 * Znz[:, idx[0]]
    else:
        j, l = idx
        out[nz] = h2 * Znz[:, j] * Znz[:, l] + (h1 if j == l else 0.0)

    # limits at r == 0: zero unless the profile is too rough there (k <= alpha order)
    if spec.power <= alpha.order and np.any(~nz):
        warnings.warn(
            f"D^{alpha} of the kernel has no limit at zero radius for m={spec.m}, d={spec.d}; "
            "using the finite part",
            SingularEvaluationWarning,
            stacklevel=3,
        )
        if alpha.order == 2 and spec.even and idx[0] == idx[1]:
            out[~nz] = spec.theta
    return out


def r_matrix(S, T, spec: KernelSpec, alpha=None) -> np.ndarray:
    """[D^alpha_s R(s_a, t_b)] for point sets S (a, d) and T (b, d)."""
    S = as_points(S, spec.d)
    T = as_points(T, spec.d)
    A = spec.anchors.points
    basis = spec.basis
    if alpha is None:
        alpha = MultiIndex((0,) * spec.d)
    alpha = as_multi_index(alpha, spec.d)
    _check_alpha(alpha, spec)

    Kst = kernel_deriv_array(S[:, None, :] - T[None, :, :], alpha, spec)
    KsA = kernel_deriv_array(S[:, None, :] - A[None, :, :], alpha, spec)
    KAt = k_m_array(A[:, None, :] - T[None, :, :], spec)
    QT = spec.anchors.cardinal(T, basis)
    QS = spec.anchors.cardinal_derivative(S, alpha, basis)
    out = Kst - KsA @ QT.T - QS @ KAt + QS @ spec.anchor_gram @ QT.T
    return spec.sign * out


def r_kernel(s, t, spec: KernelSpec) -> float:
    return float(r_matrix(as_points(s, spec.d), as_points(t, spec.d), spec)[0, 0])


def r_kernel_deriv(s, t, alpha, spec: KernelSpec) -> float:
    return float(r_matrix(as_points(s, spec.d), as_points(t, spec.d), spec, alpha)[0, 0])


@dataclass(frozen=True)
class SplineSetup:
    """Order, dimension, domain box [a, b]^d and the kernel built on its anchors."""

    m: int
    d: int
    domain: tuple[float, float]
    kernel: KernelSpec

    @property
    def basis(self) -> PolyBasis:
        return self.kernel.basis

    @property
    def anchors(self) -> AnchorSet:
        return self.kernel.anchors

    @property
    def M(self) -> int:
        return self.kernel.basis.size

    def in_domain(self, X) -> np.ndarray:
        X = as_points(X, self.d)
        lo, hi = self.domain
        return np.all((X >= lo) & (X <= hi), axis=1)


def make_setup(m: int, d: int, domain=(0.0, 1.0), anchors=None, seed: int = 0) -> SplineSetup:
    check_order(m, d)
    basis = PolyBasis.create(m, d)
    domain = (float(domain[0]), float(domain[1]))
    if anchors is None:
        anchor_set = choose_anchors(domain, m, d, seed=seed)
    elif isinstance(anchors, AnchorSet):
        anchor_set = anchors
    else:
        anchor_set = AnchorSet.from_points(anchors, basis)
    return SplineSetup(m, d, domain, KernelSpec(m, d, basis, anchor_set))
