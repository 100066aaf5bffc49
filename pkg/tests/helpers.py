"""Shared independent oracles for the test suite.

Everything here is deliberately naive (cofactor expansions, direct
insert-and-evaluate contractions, central finite differences) so the tested
code paths are checked against arithmetic that shares nothing with them.
"""

import numpy as np

from nhfields.exterior import TangentVector
from nhfields.jet import JetPoint


def cofactor_det(matrix) -> float:
    """Recursive cofactor expansion along the first row."""
    matrix = np.asarray(matrix, dtype=float)
    size = matrix.shape[0]
    if size == 1:
        return float(matrix[0, 0])
    total = 0.0
    for j in range(size):
        minor = np.delete(np.delete(matrix, 0, axis=0), j, axis=1)
        total += (-1.0) ** j * matrix[0, j] * cofactor_det(minor)
    return total


def wedge_eval_oracle(factors, vectors) -> float:
    """Wedge monomial evaluation via the cofactor determinant."""
    rows = np.asarray([np.asarray(f, dtype=float) for f in factors])
    cols = np.column_stack([v.components for v in vectors])
    return cofactor_det(rows @ cols)


def random_vector(rng, n, m) -> TangentVector:
    return TangentVector(
        rng.uniform(-1, 1, n + 1), rng.uniform(-1, 1, m), rng.uniform(-1, 1, (m, n + 1))
    )


def random_point(rng, n, m) -> JetPoint:
    return JetPoint(
        rng.uniform(-1, 1, n + 1), rng.uniform(-1, 1, m), rng.uniform(-1, 1, (m, n + 1))
    )


def fd_hessian(f, x0, step=1e-5) -> np.ndarray:
    """Central-difference Hessian of a scalar function of a flat vector."""
    x0 = np.asarray(x0, dtype=float)
    d = len(x0)
    H = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            if i == j:
                xp, xm = x0.copy(), x0.copy()
                xp[i] += step
                xm[i] -= step
                H[i, i] = (f(xp) - 2.0 * f(x0) + f(xm)) / step**2
            else:
                xpp, xpm, xmp, xmm = (x0.copy() for _ in range(4))
                xpp[[i, j]] += step
                xmm[[i, j]] -= step
                xpm[i] += step
                xpm[j] -= step
                xmp[i] -= step
                xmp[j] += step
                H[i, j] = H[j, i] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * step**2)
    return H


def fd_gradient(f, x0, step=1e-6) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    g = np.zeros(len(x0))
    for i in range(len(x0)):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2 * step)
    return g


def wave_on_constraint_point(rng, speed=2.0) -> JetPoint:
    """Random wave-scenario point with v_0 = speed * v_1."""
    v1 = rng.uniform(-1, 1)
    return JetPoint(
        rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1),
        np.array([[speed * v1, v1]]),
    )


def random_det_one_spatial(rng, scale=0.3):
    """Random 3x3 spatial block with unit determinant and mild conditioning."""
    while True:
        M = np.eye(3) + scale * rng.uniform(-1, 1, (3, 3))
        d = np.linalg.det(M)
        if abs(d) > 0.3 and np.linalg.cond(M) < 20:
            return M / np.cbrt(d)


def fluid_constraint_point(rng) -> JetPoint:
    v = np.zeros((3, 4))
    v[:, 0] = 0.3 * rng.uniform(-1, 1, 3)
    v[:, 1:] = random_det_one_spatial(rng)
    return JetPoint(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 3), v)
