"""Stereographic projection through the south pole and the induced map on functions.

Sphere points are unit vectors in R^{n+1}; the last coordinate is the axis
through the poles. All maps broadcast over leading array dimensions.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.special import gamma

SOUTH_POLE_GUARD = 1e-13


class DomainError(ValueError):
    """Raised for points at (or numerically at) the south pole."""


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^{k-1} in R^k."""
    return 2.0 * math.pi ** (k / 2) / gamma(k / 2)


def normalize(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return xi / np.linalg.norm(xi, axis=-1, keepdims=True)


def _check_not_south(xi: np.ndarray) -> None:
    if np.any(1.0 + xi[..., -1] < SOUTH_POLE_GUARD):
        raise DomainError("point too close to the south pole")


def stereo_project(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    _check_not_south(xi)
    return xi[..., :-1] / (1.0 + xi[..., -1:])


def stereo_inverse(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return np.concatenate([2.0 * x / (1.0 + r2), (1.0 - r2) / (1.0 + r2)], axis=-1)


def chordal_identity_residual(xi, zeta) -> np.ndarray | float:
    """| |pi(xi) - pi(zeta)| - |xi - zeta| / sqrt((1 + xi_last)(1 + zeta_last)) |."""
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    flat = np.linalg.norm(stereo_project(xi) - stereo_project(zeta), axis=-1)
    chord = np.linalg.norm(xi - zeta, axis=-1)
    lifted = chord / np.sqrt((1.0 + xi[..., -1]) * (1.0 + zeta[..., -1]))
    res = np.abs(flat - lifted)
    return float(res) if np.ndim(res) == 0 else res


def plane_factor(x, n: int) -> np.ndarray:
    """(2 / (1 + |x|^2))^{(n-2)/2}."""
    x = np.asarray(x, dtype=float)
    return (2.0 / (1.0 + np.sum(x * x, axis=-1))) ** ((n - 2) / 2)


def sphere_factor(xi, n: int) -> np.ndarray:
    """(1 / (1 + xi_last))^{(n-2)/2}."""
    xi = np.asarray(xi, dtype=float)
    _check_not_south(xi)
    return (1.0 / (1.0 + xi[..., -1])) ** ((n - 2) / 2)


def push_forward(v, x, n: int):
    """(Pv)(x) for a callable ``v`` on sphere points."""
    x = np.asarray(x, dtype=float)
    return plane_factor(x, n) * v(stereo_inverse(x))


def pull_back(u, xi, n: int):
    """(P^{-1}u)(xi) for a callable ``u`` on plane points."""
    xi = np.asarray(xi, dtype=float)
    return sphere_factor(xi, n) * u(stereo_project(xi))


def _tail_radius(n: int, p: float, sup: float, rel: float, core: float) -> float:
    # |Pv|^p <= sup^p (2/(1+r^2))^{(n-2)p/2} = sup^p 2^d (1+r^2)^{-d}; the tail
    # int_R^inf |S^{n-1}| r^{n-1} ... dr is at most |S^{n-1}| sup^p 2^d R^{n-2d}/(2d-n).
    decay = (n - 2) * p / 2
    if 2 * decay <= n:
        raise ValueError("L^p norm of Pv diverges for p <= n/(n-2)")
    c = sphere_area(n) * sup**p * 2.0**decay / (2 * decay - n)
    return (c / (rel * core)) ** (1.0 / (2 * decay - n))


def flat_lp_norm_radial(u_of_r, n: int, p: float, *, sup: float, rel_tail: float = 1e-10) -> float:
    """L^p(R^n) norm of a radial function given as ``u_of_r(r)``.

    ``sup`` bounds |v| on the sphere for u = Pv; it sets the truncation radius
    from the conformal decay so that the neglected tail is below
    ``rel_tail`` times the computed integral.
    """
    area = sphere_area(n)

    def f(r):
        return area * r ** (n - 1) * abs(u_of_r(r)) ** p

    core, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    r_max = max(1.0, _tail_radius(n, p, sup, rel_tail, core))
    total = core
    lo = 1.0
    while lo < r_max:
        hi = min(10.0 * lo, r_max)
        part, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
        total += part
        lo = hi
    return total ** (1.0 / p)


def flat_lp_norm_biaxial(u_of, n: int, parts: tuple[int, int], p: float, *, sup: float,
                         rel_tail: float = 1e-10) -> float:
    """L^p(R^n) norm of u(x) depending on x only through (|x_a|, |x_b|).

    x = (x_a, x_b) with x_a in R^{n1} and x_b in R^{n2-1}; the last sphere
    block contains the polar axis. ``u_of(rho_a, rho_b)`` must accept arrays.
    """
    n1, n2 = parts
    if n1 + n2 != n + 1 or n2 < 2:
        raise ValueError("parts must partition n+1 with the polar block of size >= 2")
    ca = sphere_area(n1)
    cb = sphere_area(n2 - 1) if n2 > 1 else 1.0

    def radial_slice(r):
        def g(phi):
            ra, rb = r * math.cos(phi), r * math.sin(phi)
            return math.cos(phi) ** (n1 - 1) * math.sin(phi) ** (n2 - 2) * abs(u_of(ra, rb)) ** p
        val, _ = integrate.quad(g, 0.0, math.pi / 2, epsabs=0.0, epsrel=1e-12, limit=200)
        return ca * cb * r ** (n - 1) * val

    core, _ = integrate.quad(radial_slice, 0.0, 1.0, epsabs=0.0, epsrel=1e-11, limit=200)
    r_max = max(1.0, _tail_radius(n, p, sup, rel_tail, core))
    total = core
    lo = 1.0
    while lo < r_max:
        hi = min(10.0 * lo, r_max)
        part, _ = integrate.quad(radial_slice, lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)
        total += part
        lo = hi
    return total ** (1.0 / p)
