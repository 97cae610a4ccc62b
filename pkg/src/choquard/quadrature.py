"""Jacobi-weight quadrature helpers and barycentric differentiation."""

from __future__ import annotations

import numpy as np
from scipy.special import roots_jacobi


def jacobi_table(kmax: int, a: float, b: float, x) -> np.ndarray:
    """Values P_k^{(a,b)}(x) for k = 0..kmax, shape (kmax+1, *x.shape).

    Standard three-term recurrence; stable for the a, b >= 0 used here.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax == 0:
        return out
    out[1] = (a + 1) + (a + b + 2) * (x - 1) / 2
    for k in range(2, kmax + 1):
        c = 2 * k + a + b
        out[k] = ((c - 1) * (c * (c - 2) * x + a * a - b * b) * out[k - 1]
                  - 2 * (k + a - 1) * (k + b - 1) * c * out[k - 2]) / (2 * k * (k + a + b) * (c - 2))
    return out


def jacobi_moments(kmax: int, a: float, b: float, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_q w_q P_k^{(a,b)}(x_q) for k = 0..kmax without storing the table."""
    out = np.empty(kmax + 1)
    p0 = np.ones_like(x)
    out[0] = w.sum()
    if kmax == 0:
        return out
    p1 = (a + 1) + (a + b + 2) * (x - 1) / 2
    out[1] = w @ p1
    for k in range(2, kmax + 1):
        c = 2 * k + a + b
        p2 = ((c - 1) * (c * (c - 2) * x + a * a - b * b) * p1
              - 2 * (k + a - 1) * (k + b - 1) * c * p0) / (2 * k * (k + a + b) * (c - 2))
        out[k] = w @ p2
        p0, p1 = p1, p2
    return out


def gauss_jacobi(npts: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for the weight (1-x)^a (1+x)^b on [-1, 1], ascending."""
    x, w = roots_jacobi(npts, a, b)
    return np.asarray(x, dtype=float), np.asarray(w, dtype=float)


def barycentric_weights(x: np.ndarray) -> np.ndarray:
    """Barycentric weights 1/prod_{j!=i}(x_i - x_j), scaled to max modulus 1.

    Accumulated in log form so that large node counts do not underflow.
    """
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    logmag = -np.sum(np.log(np.abs(d)), axis=1)
    sign = np.prod(np.sign(d), axis=1)
    return sign * np.exp(logmag - logmag.max())


def diff_matrices(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second barycentric differentiation matrices on nodes ``x``."""
    c = barycentric_weights(x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    inv = 1.0 / dx
    np.fill_diagonal(inv, 0.0)
    d1 = (c[None, :] / c[:, None]) * inv
    np.fill_diagonal(d1, 0.0)
    np.fill_diagonal(d1, -d1.sum(axis=1))
    d2 = 2.0 * d1 * (np.diag(d1)[:, None] - inv)
    np.fill_diagonal(d2, 0.0)
    np.fill_diagonal(d2, -d2.sum(axis=1))
    return d1, d2


def barycentric_interp(x: np.ndarray, c: np.ndarray, values: np.ndarray, t) -> np.ndarray:
    """Evaluate the polynomial interpolant through (x, values) at ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    diff = t[:, None] - x[None, :]
    exact = np.isclose(diff, 0.0, rtol=0.0, atol=1e-15)
    diff[exact] = 1.0
    tmp = c[None, :] / diff
    out = (tmp @ values) / tmp.sum(axis=1)
    hit_rows, hit_cols = np.nonzero(exact)
    out[hit_rows] = values[hit_cols]
    return out
