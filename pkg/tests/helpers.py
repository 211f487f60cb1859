"""Shared data generators for the test suite."""

import numpy as np

from smoothspline import Dataset, make_setup


def jittered_lattice(rng: np.random.Generator, n: int, d: int, jitter: float = 0.7) -> np.ndarray:
    """n points in [0, 1]^d, one per randomly chosen cell of a k^d grid, jittered inside the cell.

    Keeps a minimum separation of (1 - jitter) / k, which keeps the kernel
    matrix of high-order splines far enough from singular for tight tests.
    """
    k = int(np.ceil(n ** (1.0 / d)))
    cells = np.array(np.meshgrid(*[np.arange(k)] * d, indexing="ij")).reshape(d, -1).T
    cells = cells[rng.choice(len(cells), n, replace=False)]
    return (cells + 0.5 + jitter * (rng.random((n, d)) - 0.5)) / k


def random_case(rng: np.random.Generator, dims=(1, 2), orders=(2, 3, 4), n_range=(10, 60)):
    """A random (dataset, setup) pair with 2m > d and a smooth signal plus noise."""
    d = int(rng.choice(dims))
    m = int(rng.choice([mm for mm in orders if 2 * mm > d]))
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    X = jittered_lattice(rng, n, d)
    Y = np.sin(3 * X.sum(axis=1)) + 0.1 * rng.standard_normal(n)
    return Dataset(X, Y), make_setup(m, d, (0.0, 1.0))


def brute_force_fit(X, Y, lam):
    """Fitted values minimizing (1/n)|Y - Pc - Rd|^2 + lam d'Rd for d=1, m=2, anchors {0, 1}.

    R is built from its own four-term loop and the stationarity equations
    in (c, d) are solved by least squares, without the bordered system.
    """
    K = lambda z: abs(z) ** 3 / 12
    q = [lambda x: 1 - x, lambda x: x]
    a = [0.0, 1.0]

    def R(s, t):
        out = K(s - t)
        out -= sum(q[i](t) * K(s - a[i]) for i in range(2))
        out -= sum(q[j](s) * K(a[j] - t) for j in range(2))
        out += sum(q[i](s) * q[j](t) * K(a[i] - a[j]) for i in range(2) for j in range(2))
        return out

    n = len(X)
    Rm = np.array([[R(s, t) for t in X] for s in X])
    P = np.column_stack([np.ones(n), X])
    # gradient in c: P'(Pc + Rd - Y) = 0 ; gradient in d: R(Pc + Rd - Y) + n lam R d = 0
    A = np.block([[P.T @ P, P.T @ Rm], [Rm @ P, Rm @ Rm + n * lam * Rm]])
    b = np.concatenate([P.T @ Y, Rm @ Y])
    sol, *_ = np.linalg.lstsq(A, b, rcond=1e-14)
    return P @ sol[:2] + Rm @ sol[2:]
