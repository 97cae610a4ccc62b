"""Reduced computational domain for O(n1) x O(n2)-invariant functions on S^n.

A point of S^n is written xi = (cos(theta) w1, sin(theta) w2) with w_i on the
unit sphere of R^{n_i}; invariant functions depend on theta in [0, pi/2] only.
The collocation variable is s = cos(2 theta), in which the volume density
cos^{n1-1} sin^{n2-1} d(theta) becomes the Jacobi weight
(1 - s)^a (1 + s)^b with a = (n2 - 2)/2, b = (n1 - 2)/2. Nodes are the
Gauss-Jacobi points for that weight, so the grid represents polynomials in s
of degree < size and integrates products of two of them exactly.

Nodes are stored in increasing theta (decreasing s).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .params import ProblemParams
from .quadrature import (barycentric_interp, barycentric_weights, diff_matrices,
                         gauss_jacobi, jacobi_table)
from .stereo import sphere_area

MIN_GRID = 8
DEFAULT_GRID = 64

G_CLASS = "G"
GAMMA_CLASS = "Gamma"


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ReducedGrid:
    params: ProblemParams
    parts: tuple[int, int]
    s: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    bary: np.ndarray
    a: float
    b: float
    orbit_volume: float
    _mass_matrix: Optional[np.ndarray] = field(default=None, repr=False)
    _factor: Optional[tuple] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.s.size

    @property
    def swappable(self) -> bool:
        return self.parts[0] == self.parts[1]

    @property
    def design_degree(self) -> int:
        """Highest harmonic degree represented exactly (polynomials of degree size-1 in s)."""
        return 2 * (self.size - 1)

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    def key(self) -> dict:
        return {"n": self.params.n, "parts": list(self.parts), "size": self.size}

    def h1_matrix(self) -> np.ndarray:
        """Gram matrix of the H^1 inner product in nodal values."""
        if self._mass_matrix is None:
            grad_w = self.weights * 4.0 * (1.0 - self.s**2)
            m = self.d1.T @ (grad_w[:, None] * self.d1) + self.params.mass * np.diag(self.weights)
            object.__setattr__(self, "_mass_matrix", 0.5 * (m + m.T))
        return self._mass_matrix

    def h1_factor(self):
        """Cholesky factor of :meth:`h1_matrix`, computed once."""
        if self._factor is None:
            object.__setattr__(self, "_factor", cho_factor(self.h1_matrix()))
        return self._factor

    def h1_solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.h1_factor(), rhs)

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """v(pi/2 - theta) on the nodes; only defined for equal blocks."""
        if not self.swappable:
            raise GridError("reflection theta -> pi/2 - theta needs equal blocks")
        return values[::-1]

    def interpolate(self, values: np.ndarray, theta) -> np.ndarray:
        s = np.cos(2.0 * np.asarray(theta, dtype=float))
        return barycentric_interp(self.s, self.bary, values, s)


@dataclass(frozen=True, eq=False)
class FieldFunction:
    values: np.ndarray
    sym: str = G_CLASS

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.sym not in (G_CLASS, GAMMA_CLASS):
            raise GridError(f"unknown symmetry tag {self.sym!r}")

    def __neg__(self):
        return FieldFunction(-self.values, self.sym)

    def scaled(self, t: float) -> "FieldFunction":
        return FieldFunction(t * self.values, self.sym)


def values_of(v) -> np.ndarray:
    if isinstance(v, FieldFunction):
        return v.values
    return np.asarray(v, dtype=float)


def _check(grid: ReducedGrid, v) -> np.ndarray:
    vals = values_of(v)
    if vals.shape != (grid.size,):
        raise GridError(f"field has shape {vals.shape}, grid has {grid.size} nodes")
    return vals


def biaxial_volume(parts: tuple[int, int]) -> float:
    """Closed form |S^{n1-1}| |S^{n2-1}| int_0^{pi/2} cos^{n1-1} sin^{n2-1} = |S^n|."""
    from scipy.special import beta
    n1, n2 = parts
    return sphere_area(n1) * sphere_area(n2) * 0.5 * beta(n1 / 2, n2 / 2)


def build_grid(params: ProblemParams, parts, size: int = DEFAULT_GRID) -> ReducedGrid:
    parts = tuple(int(p) for p in parts)
    if len(parts) != 2:
        raise GridError("the reduced solver supports two blocks only")
    n1, n2 = parts
    if n1 < 2 or n2 < 2 or n1 + n2 != params.n + 1:
        raise GridError(f"parts {parts} are not a biaxial descriptor for n={params.n}")
    if size < MIN_GRID:
        raise GridError(f"grid size must be >= {MIN_GRID}, got {size}")
    a, b = (n2 - 2) / 2, (n1 - 2) / 2
    s, w = gauss_jacobi(size, a, b)
    if n1 == n2:
        # exact mirror symmetry so that tau-odd fields are an exact linear subspace
        s = 0.5 * (s - s[::-1])
        w = 0.5 * (w + w[::-1])
    # d(theta) density -> ds: cos^{n1-1} sin^{n2-1} d theta = 2^{-(n-3)/2} w(s) ds / 4
    scale = sphere_area(n1) * sphere_area(n2) * 2.0 ** (-(n1 + n2 - 4) / 2) / 4.0
    s, w = s[::-1].copy(), w[::-1].copy()
    theta = 0.5 * np.arccos(s)
    d1, d2 = diff_matrices(s)
    return ReducedGrid(
        params=params, parts=parts, s=s, theta=theta, weights=w * scale,
        d1=d1, d2=d2, bary=barycentric_weights(s), a=a, b=b,
        orbit_volume=sphere_area(n1) * sphere_area(n2),
    )


def derivative_theta(grid: ReducedGrid, v) -> np.ndarray:
    """d v / d theta at the nodes (d/d theta = -2 sin(2 theta) d/ds)."""
    vals = _check(grid, v)
    return -2.0 * np.sqrt(1.0 - grid.s**2) * (grid.d1 @ vals)


def laplacian_matrix(grid: ReducedGrid) -> np.ndarray:
    s, a, b = grid.s, grid.a, grid.b
    return 4.0 * ((1.0 - s**2)[:, None] * grid.d2 + (b - a - (a + b + 2.0) * s)[:, None] * grid.d1)


def apply_laplacian(grid: ReducedGrid, v) -> FieldFunction:
    """Laplace-Beltrami operator of S^n restricted to invariant functions.

    In theta this is v'' + ((n2-1) cot theta - (n1-1) tan theta) v'; the
    nodal form uses the equivalent Jacobi operator in s.
    """
    vals = _check(grid, v)
    sym = v.sym if isinstance(v, FieldFunction) else G_CLASS
    return FieldFunction(laplacian_matrix(grid) @ vals, sym)


def l2_inner(grid: ReducedGrid, u, v) -> float:
    return float(np.dot(grid.weights * _check(grid, u), _check(grid, v)))


def h1_inner(grid: ReducedGrid, u, v) -> float:
    """int (u' v' + n(n-2)/4 u v) dV."""
    return float(_check(grid, u) @ grid.h1_matrix() @ _check(grid, v))


def h1_norm(grid: ReducedGrid, v) -> float:
    return float(np.sqrt(max(h1_inner(grid, v, v), 0.0)))


def dirichlet_energy(grid: ReducedGrid, v) -> float:
    """int |grad v|^2 dV."""
    vals = _check(grid, v)
    dv = grid.d1 @ vals
    return float(np.sum(grid.weights * 4.0 * (1.0 - grid.s**2) * dv * dv))


def rayleigh_quotient(grid: ReducedGrid, v) -> float:
    return dirichlet_energy(grid, v) / l2_inner(grid, v, v)


def harmonic_eigenvalue(n: int, degree: int) -> int:
    return degree * (degree + n - 1)


def orthonormal_basis(grid: ReducedGrid, kmax: Optional[int] = None) -> np.ndarray:
    """Rows are L^2(dV)-orthonormal invariant harmonics of degrees 0, 2, ..., 2 kmax.

    Row k is the Jacobi polynomial P_k^{(a,b)}(s), which is what Gram-Schmidt
    on 1, s, s^2, ... produces; the recurrence avoids the monomial basis's
    ill-conditioning. Signs are fixed by a positive value at theta = 0.
    """
    kmax = grid.size - 1 if kmax is None else kmax
    if kmax > grid.size - 1:
        raise GridError(f"degree {2 * kmax} exceeds the design degree {grid.design_degree}")
    table = jacobi_table(kmax, grid.a, grid.b, grid.s)
    norms = np.sqrt(table**2 @ grid.weights)
    return table / norms[:, None]


def invariant_harmonic(grid: ReducedGrid, degree: int) -> Optional[FieldFunction]:
    """L^2-normalized invariant harmonic of the given degree, ``None`` if that space is empty.

    Invariant harmonics exist in even degrees only. For equal blocks the
    result carries the Gamma tag exactly when it is odd under the reflection.
    """
    if degree < 0:
        raise GridError("degree must be non-negative")
    if degree % 2:
        return None
    k = degree // 2
    if k > grid.size - 1:
        raise GridError(f"degree {degree} exceeds the design degree {grid.design_degree}")
    vals = orthonormal_basis(grid, k)[k]
    sym = GAMMA_CLASS if grid.swappable and k % 2 == 1 else G_CLASS
    return FieldFunction(vals, sym)


def antisymmetrize(grid: ReducedGrid, v) -> FieldFunction:
    vals = _check(grid, v)
    return FieldFunction(0.5 * (vals - grid.reflect(vals)), GAMMA_CLASS)


def is_antisymmetric(grid: ReducedGrid, v, tol: float = 1e-10) -> bool:
    vals = _check(grid, v)
    scale = max(np.max(np.abs(vals)), 1e-300)
    return bool(np.max(np.abs(vals + grid.reflect(vals))) <= tol * scale)


def grid_csv_rows(grid: ReducedGrid) -> list[tuple[float, float]]:
    return list(zip(grid.theta.tolist(), grid.weights.tolist()))
