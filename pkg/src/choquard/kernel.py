"""Orbit-averaged chordal Riesz kernel on the reduced domain.

J_mu f(xi) = int_{S^n} |xi - zeta|^{-mu} f(zeta) dV(zeta). For invariant f the
result is invariant, and in nodal form

    (J_mu f)(theta_i) = sum_j K[i, j] w_j f(theta_j).

Assembly uses product integration in geodesic polar coordinates around each
node xi_i: zeta = t xi_i + sqrt(1 - t^2) eta with eta on the unit sphere of
xi_i's orthogonal complement. In these coordinates the chordal singularity
(2 - 2t)^{-mu/2} is a Jacobi weight in t and is integrated exactly by
Gauss-Jacobi nodes, so no adaptive refinement toward the diagonal is needed.
Row i then stores the moments of that measure against the invariant
harmonic basis, and K is recovered by the discrete transform.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import eval_gegenbauer, gammaln

from .geometry import FieldFunction, GridError, ReducedGrid, orthonormal_basis, values_of
from .params import ProblemParams, _num_json
from .quadrature import gauss_jacobi, jacobi_moments
from .stereo import sphere_area

log = logging.getLogger(__name__)

CACHE_ENV = "CHOQUARD_CACHE_DIR"
CACHE_VERSION = 1
EXTRA_ORDER = 8


class KernelError(ValueError):
    pass


class CacheError(OSError):
    pass


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    matrix: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.matrix, dtype="<f8").tobytes()).hexdigest()


def _check_mu(params: ProblemParams) -> None:
    if not 0 < params.mu < params.n:
        raise KernelError(f"the Riesz kernel diverges for mu={params.mu} >= n={params.n}")


def quadrature_orders(size: int, extra: int = EXTRA_ORDER) -> dict:
    return {"t": size + extra, "eta": size + extra, "split": size // 2 + extra}


def _polar_rule(params: ProblemParams, parts, orders: dict):
    """Flattened product rule for the (t, eta_1, split) coordinates around a node.

    t: cosine of the geodesic distance, weight |S^{n-1}| 2^{-mu/2}
       (1-t)^{(n-2-mu)/2} (1+t)^{(n-2)/2}.
    eta_1: component of eta along the in-plane tangent, normalized
       projection measure (1 - x^2)^{(n-3)/2} of S^{n-1}.
    split: fraction beta of the remaining tangent mass in block one, the
       Dirichlet projection of a uniform point on S^{n-2} onto two blocks
       of sizes n1-1 and n2-1.
    """
    n, mu = params.n, float(params.mu)
    n1, n2 = parts
    t, wt = gauss_jacobi(orders["t"], (n - 2 - mu) / 2, (n - 2) / 2)
    wt = wt * sphere_area(n) * 2.0 ** (-mu / 2)
    ea, wa = gauss_jacobi(orders["eta"], (n - 3) / 2, (n - 3) / 2)
    wa = wa / wa.sum()
    xb, wb = gauss_jacobi(orders["split"], (n2 - 1) / 2 - 1, (n1 - 1) / 2 - 1)
    wb = wb / wb.sum()
    beta = (1.0 + xb) / 2.0
    T, A, B = np.meshgrid(t, ea, beta, indexing="ij")
    wq = (wt[:, None, None] * wa[None, :, None] * wb[None, None, :]).ravel()
    return T.ravel(), A.ravel(), B.ravel(), wq


def _row_moments(grid: ReducedGrid, rule, i: int, norms: np.ndarray) -> np.ndarray:
    T, A, B, wq = rule
    r = np.sqrt(1.0 - T * T)
    c, sn = math.cos(grid.theta[i]), math.sin(grid.theta[i])
    # |zeta_1|^2 for zeta = t xi_i + r eta, eta = eta_1 e_theta + (rest split between blocks)
    z1sq = (T * c - r * sn * A) ** 2 + r * r * (1.0 - A * A) * B
    sq = np.clip(2.0 * z1sq - 1.0, -1.0, 1.0)
    return jacobi_moments(grid.size - 1, grid.a, grid.b, sq, wq) / norms


def _moment_matrix(grid: ReducedGrid, params: ProblemParams, orders: dict, rows=None) -> np.ndarray:
    from .quadrature import jacobi_table
    rule = _polar_rule(params, grid.parts, orders)
    table = jacobi_table(grid.size - 1, grid.a, grid.b, grid.s)
    norms = np.sqrt(table**2 @ grid.weights)
    rows = range(grid.size) if rows is None else rows
    return np.array([_row_moments(grid, rule, i, norms) for i in rows])


def cache_key(grid: ReducedGrid, params: ProblemParams, orders: dict) -> dict:
    return {
        "version": CACHE_VERSION,
        "n": params.n,
        "parts": list(grid.parts),
        "mu": _num_json(params.mu) if params.exact else repr(float(params.mu)),
        "size": grid.size,
        "orders": orders,
    }


def _key_name(key: dict) -> str:
    blob = json.dumps(key, sort_keys=True).encode()
    return "kernel-" + hashlib.sha256(blob).hexdigest()[:24]


def default_cache_dir() -> Optional[Path]:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else None


def _load_cached(directory: Path, key: dict, size: int) -> Optional[KernelMatrix]:
    name = _key_name(key)
    meta_path, bin_path = directory / f"{name}.json", directory / f"{name}.bin"
    if not (meta_path.exists() and bin_path.exists()):
        return None
    try:
        meta = json.loads(meta_path.read_text())
        raw = bin_path.read_bytes()
    except (OSError, ValueError) as exc:
        log.warning("unreadable kernel cache %s (%s); rebuilding", name, exc)
        return None
    if meta.get("key") != key or hashlib.sha256(raw).hexdigest() != meta.get("sha256"):
        log.warning("kernel cache %s failed its hash check; rebuilding", name)
        return None
    if len(raw) != 8 * size * size:
        log.warning("kernel cache %s has the wrong length; rebuilding", name)
        return None
    mat = np.frombuffer(raw, dtype="<f8").reshape(size, size).astype(float)
    meta = dict(meta)
    meta["from_cache"] = True
    return KernelMatrix(mat, meta)


def _store(directory: Path, kern: KernelMatrix) -> None:
    try:
        directory.mkdir(parents=True, exist_ok=True)
        name = _key_name(kern.meta["key"])
        raw = np.ascontiguousarray(kern.matrix, dtype="<f8").tobytes()
        meta = {k: v for k, v in kern.meta.items() if k != "from_cache"}
        meta["sha256"] = hashlib.sha256(raw).hexdigest()
        (directory / f"{name}.bin").write_bytes(raw)
        (directory / f"{name}.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    except OSError as exc:
        raise CacheError(f"cannot write kernel cache in {directory}: {exc}") from exc


def assemble_kernel(grid: ReducedGrid, params: ProblemParams, cache_dir=None,
                    extra_order: int = EXTRA_ORDER, use_cache: bool = True) -> KernelMatrix:
    """Dense orbit-averaged kernel K on ``grid``.

    ``cache_dir`` defaults to $CHOQUARD_CACHE_DIR; with neither set nothing is
    cached. The error estimate compares three rows against a rule with eight
    extra points per direction.
    """
    _check_mu(params)
    if grid.params.n != params.n:
        raise GridError("grid and parameters disagree on n")
    orders = quadrature_orders(grid.size, extra_order)
    key = cache_key(grid, params, orders)
    directory = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    if use_cache and directory is not None:
        hit = _load_cached(directory, key, grid.size)
        if hit is not None:
            return hit

    table = orthonormal_basis(grid)
    moments = _moment_matrix(grid, params, orders)
    mat = moments @ table
    mat = 0.5 * (mat + mat.T)
    if grid.swappable:
        mat = 0.5 * (mat + mat[::-1, ::-1])

    probe = sorted({0, grid.size // 2, grid.size - 1})
    fine = _moment_matrix(grid, params, quadrature_orders(grid.size, extra_order + 8), probe) @ table
    est = float(np.max(np.abs(fine - mat[probe])) / np.max(np.abs(mat)))
    meta = {
        "key": key,
        "method": "geodesic-polar product integration",
        "orders": orders,
        "refinement_depth": 0,
        "estimated_error": est,
        "min_entry": float(mat.min()),
    }
    kern = KernelMatrix(mat, meta)
    if use_cache and directory is not None:
        _store(directory, kern)
    return kern


def _check_pair(kernel: KernelMatrix, grid: ReducedGrid, vals: np.ndarray) -> None:
    if kernel.size != grid.size or vals.shape != (grid.size,):
        raise GridError("kernel, grid and field sizes do not match")


def apply_Jmu(kernel: KernelMatrix, grid: ReducedGrid, f) -> FieldFunction:
    vals = values_of(f)
    _check_pair(kernel, grid, vals)
    return FieldFunction(kernel.matrix @ (grid.weights * vals))


def nonlocal_pairing(kernel: KernelMatrix, grid: ReducedGrid, params: ProblemParams, v) -> float:
    """B(v) = int J_mu[|v|^p] |v|^p dV with p = 2*_mu."""
    vals = values_of(v)
    _check_pair(kernel, grid, vals)
    wf = grid.weights * np.abs(vals) ** params.p
    return float(wf @ (kernel.matrix @ wf))


def nl_norm(kernel: KernelMatrix, grid: ReducedGrid, params: ProblemParams, v) -> float:
    return max(nonlocal_pairing(kernel, grid, params, v), 0.0) ** (1.0 / (2.0 * params.p))


@lru_cache(maxsize=512)
def _funk_hecke_cached(n: int, mu: float, degree: int) -> float:
    lam = (n - 1) / 2
    norm = eval_gegenbauer(degree, lam, 1.0)

    def g(t):
        return eval_gegenbauer(degree, lam, t) / norm

    # (1+t)^{(n-2)/2} (1-t)^{(n-2-mu)/2} handled by the algebraic weight
    val, err = integrate.quad(g, -1.0, 1.0, weight="alg", wvar=((n - 2) / 2, (n - 2 - mu) / 2),
                              epsabs=0.0, epsrel=1e-12, limit=500)
    return sphere_area(n) * 2.0 ** (-mu / 2) * val


def funk_hecke_eigenvalue(params: ProblemParams, degree: int) -> float:
    """Eigenvalue of J_mu on degree-``degree`` spherical harmonics by 1-D quadrature."""
    if degree < 0:
        raise KernelError("degree must be non-negative")
    _check_mu(params)
    return _funk_hecke_cached(params.n, float(params.mu), int(degree))


def funk_hecke_closed_form(params: ProblemParams, degree: int) -> float:
    """Gamma-function form of the same eigenvalue, used as a cross-check."""
    n, mu = params.n, float(params.mu)
    _check_mu(params)
    logv = ((n - mu) * math.log(2) + (n / 2) * math.log(math.pi)
            + gammaln((n - mu) / 2) - gammaln(mu / 2)
            + gammaln(degree + mu / 2) - gammaln(degree + n - mu / 2))
    return math.exp(logv)


class FunkHeckeTable:
    """Lazily filled map degree -> eigenvalue."""

    def __init__(self, params: ProblemParams):
        _check_mu(params)
        self.params = params
        self._values: dict[int, float] = {}

    def __getitem__(self, degree: int) -> float:
        if degree not in self._values:
            self._values[degree] = funk_hecke_eigenvalue(self.params, degree)
        return self._values[degree]

    def degrees(self) -> list[int]:
        return sorted(self._values)


def kernel_csv_rows(kernel: KernelMatrix, grid: ReducedGrid):
    for i in range(kernel.size):
        for j in range(kernel.size):
            yield grid.theta[i], grid.theta[j], kernel.matrix[i, j]
