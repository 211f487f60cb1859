import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from smoothspline.basis import MultiIndex
from smoothspline.errors import InvalidOrderError, UnsupportedDerivativeError
from smoothspline.kernel import (
    SingularEvaluationWarning,
    k_m,
    kernel_deriv_array,
    make_setup,
    max_derivative_order,
    r_kernel,
    r_kernel_deriv,
    r_matrix,
    theta,
)

from helpers import jittered_lattice


def theta_oracle(m, d):
    # direct transcription of the two closed forms, gamma taken from scipy
    if (2 * m - d) % 2 == 0:
        return (-1) ** (d // 2 + 1) / (2 ** (2 * m - 1) * math.pi ** (d / 2) * math.factorial(m - 1) * math.factorial(m - d // 2))
    return (-1) ** m * gamma(d / 2 - m) / (2 ** (2 * m) * math.pi ** (d / 2) * math.factorial(m - 1))


def test_theta_examples():
    assert theta(2, 2) == pytest.approx(1 / (8 * math.pi), abs=1e-12)
    assert theta(2, 1) == pytest.approx(1 / 12, abs=1e-12)
    assert theta(3, 1) == pytest.approx(1 / 240, abs=1e-15)
    assert theta(4, 1) == pytest.approx(1 / 10080, abs=1e-15)


@pytest.mark.parametrize("m,d", [(m, d) for m in range(1, 7) for d in (1, 2, 3, 4) if 2 * m > d])
def test_theta_matches_gamma_oracle(m, d):
    assert theta(m, d) == pytest.approx(theta_oracle(m, d), rel=1e-12)


def test_theta_rejects_rough_orders():
    with pytest.raises(InvalidOrderError):
        theta(1, 2)


def test_odd_branch_for_m4_d1():
    s = make_setup(4, 1)
    assert not s.kernel.even and s.kernel.power == 7


def test_k_m_examples():
    s22 = make_setup(2, 2).kernel
    s21 = make_setup(2, 1).kernel
    assert k_m(np.array([0.6, 0.8]), s22) == pytest.approx(0.0, abs=1e-16)
    assert k_m(2.0, s21) == pytest.approx(2 / 3)
    for m, d in [(2, 1), (2, 2), (3, 2), (4, 1), (3, 3)]:
        spec = make_setup(m, d).kernel
        assert k_m(np.zeros(d), spec) == 0.0


def test_k_m_is_cubic_over_12_for_m2_d1():
    spec = make_setup(2, 1).kernel
    z = np.linspace(-3, 3, 61)
    assert np.allclose([k_m(v, spec) for v in z], np.abs(z) ** 3 / 12, rtol=0, atol=1e-15)


def test_second_derivative_of_cubic_kernel():
    spec = make_setup(2, 1).kernel
    val = kernel_deriv_array(np.array([[2.0]]), MultiIndex((2,)), spec)
    assert val[0] == pytest.approx(1.0)


@pytest.mark.parametrize("m,d", [(2, 1), (3, 1), (4, 1), (2, 2), (3, 2), (2, 3)])
def test_r_vanishes_at_anchors(m, d):
    setup = make_setup(m, d, (0.0, 1.0))
    rng = np.random.default_rng(5)
    T = rng.uniform(-0.5, 1.5, size=(1000, d))
    A = setup.anchors.points
    assert np.max(np.abs(r_matrix(A, T, setup.kernel))) <= 1e-8
    assert np.max(np.abs(r_matrix(T, A, setup.kernel))) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), md=st.sampled_from([(2, 1), (4, 1), (2, 2), (3, 2)]))
def test_r_symmetric(seed, md):
    m, d = md
    setup = make_setup(m, d)
    rng = np.random.default_rng(seed)
    S, T = rng.random((5, d)), rng.random((5, d))
    assert np.max(np.abs(r_matrix(S, T, setup.kernel) - r_matrix(T, S, setup.kernel).T)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), md=st.sampled_from([(2, 1), (3, 1), (2, 2), (3, 2)]), n=st.integers(2, 20))
def test_gram_positive_semidefinite(seed, md, n):
    m, d = md
    setup = make_setup(m, d)
    X = jittered_lattice(np.random.default_rng(seed), n, d)
    w = np.linalg.eigvalsh(r_matrix(X, X, setup.kernel))
    assert w.min() >= -1e-8 * max(w.max(), 0.0) - 1e-14


def test_r_positive_on_diagonal_off_anchors():
    setup = make_setup(2, 1, (0.0, 1.0))
    assert r_kernel(0.5, 0.5, setup.kernel) > 0


def test_r_matches_four_term_formula():
    # independent loop evaluation for d=1, m=2, anchors {0, 1}
    setup = make_setup(2, 1, (0.0, 1.0), anchors=[0.0, 1.0])
    K = lambda z: abs(z) ** 3 / 12
    q = [lambda x: 1 - x, lambda x: x]
    anchors = [0.0, 1.0]

    def R(s, t):
        out = K(s - t)
        out -= sum(q[i](t) * K(s - anchors[i]) for i in range(2))
        out -= sum(q[j](s) * K(anchors[j] - t) for j in range(2))
        out += sum(q[i](s) * q[j](t) * K(anchors[i] - anchors[j]) for i in range(2) for j in range(2))
        return out

    for s, t in [(0.3, 0.7), (0.5, 0.5), (-0.4, 1.3), (0.9, 0.1)]:
        assert r_kernel(s, t, setup.kernel) == pytest.approx(R(s, t), abs=1e-15)


def test_zero_order_derivative_is_value():
    setup = make_setup(3, 2)
    s, t = np.array([0.2, 0.7]), np.array([0.6, 0.1])
    assert r_kernel_deriv(s, t, (0, 0), setup.kernel) == pytest.approx(r_kernel(s, t, setup.kernel), rel=1e-14)


def _fd_check(setup, alpha, rng, n_points=50):
    """Relative error of D^alpha_s R(s, t) against central differences of the next lower order."""
    d = setup.d
    T = jittered_lattice(rng, 6, d) * 0.8 + 0.1
    S = rng.uniform(0.05, 0.95, size=(4 * n_points, d))
    far = np.min(np.linalg.norm(S[:, None, :] - np.vstack([T, setup.anchors.points])[None], axis=-1), axis=1) > 1e-2
    S = S[far][:n_points]
    j = next(i for i, e in enumerate(alpha) if e > 0)
    lower = list(alpha)
    lower[j] -= 1
    h = 1e-5
    e = np.zeros(d)
    e[j] = h
    exact = r_matrix(S, T, setup.kernel, alpha)
    fd = (r_matrix(S + e, T, setup.kernel, tuple(lower)) - r_matrix(S - e, T, setup.kernel, tuple(lower))) / (2 * h)
    scale = np.max(np.abs(exact))
    return np.max(np.abs(exact - fd) / np.maximum(np.abs(exact), 1e-3 * scale))


@pytest.mark.parametrize("m", [2, 3, 4])
def test_derivatives_d1_finite_differences(m):
    setup = make_setup(m, 1, (0.0, 1.0))
    rng = np.random.default_rng(m)
    for p in range(1, 2 * m - 1):
        assert _fd_check(setup, (p,), rng) <= 1e-5, p


@pytest.mark.parametrize("m", [2, 3])
def test_derivatives_d2_finite_differences(m):
    setup = make_setup(m, 2, (0.0, 1.0))
    rng = np.random.default_rng(10 + m)
    for alpha in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
        assert _fd_check(setup, alpha, rng) <= 1e-5, alpha


def test_unsupported_orders_rejected():
    assert max_derivative_order(4, 1) == 6
    assert max_derivative_order(3, 2) == 2
    with pytest.raises(UnsupportedDerivativeError):
        r_matrix([0.5], [0.2], make_setup(2, 1).kernel, (3,))
    with pytest.raises(UnsupportedDerivativeError):
        r_matrix([[0.5, 0.5]], [[0.2, 0.1]], make_setup(3, 2).kernel, (2, 1))


def test_singular_radius_flagged():
    spec = make_setup(2, 2).kernel
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = kernel_deriv_array(np.zeros((1, 2)), MultiIndex((2, 0)), spec)
    assert any(issubclass(w.category, SingularEvaluationWarning) for w in caught)
    assert np.isfinite(out).all()
