"""Lifted energy, its H^1 gradient and critical-point searches on the reduced grid.

The discrete energy of nodal values v is

    E(v) = 1/2 v^T M v - 1/(2p) (w f)^T K (w f),   f = |v|^p,  p = 2*_mu,

with M the H^1 Gram matrix of the grid. Its Euclidean gradient is
r = M v - w * (K (w f)) * |v|^{p-2} v and the H^1 gradient is M^{-1} r.

Searches:

* ``solve_critical_point``: Nehari-projected H^1 gradient flow with Armijo
  backtracking, switched to damped Newton once the residual is small. Finds
  the least-energy solution of a symmetry class (and nearby critical points).
* ``solve_sequence``: the ground state of the class, then higher critical
  points by a local minimax iteration (Li and Zhou, 2001) against the span
  of the solutions already found, each polished by Newton. A deflated Newton
  search is the fallback when the minimax iteration stalls.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .geometry import (G_CLASS, GAMMA_CLASS, FieldFunction, GridError, ReducedGrid,
                       antisymmetrize, invariant_harmonic, orthonormal_basis, values_of)
from .kernel import KernelMatrix, nonlocal_pairing
from .params import ProblemParams

log = logging.getLogger(__name__)

CLASSES = (G_CLASS, GAMMA_CLASS)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergyBreakdown:
    quadratic: float
    nonlocal_: float
    total: float

    def to_dict(self) -> dict:
        return {"quadratic": self.quadratic, "nonlocal": self.nonlocal_, "total": self.total}


@dataclass
class SolveOptions:
    tol: float = 1e-8
    max_iter: int = 5000
    step0: float = 1.0
    shrink: float = 0.5
    min_step: float = 1e-12
    armijo: float = 1e-4
    # residual at which the gradient flow hands over to Newton
    switch_tol: float = 1e-4
    newton_max: int = 60
    lmm_tol: float = 1e-5
    lmm_max_iter: int = 400
    collapse_tol: float = 1e-8


@dataclass
class SolveResult:
    field: FieldFunction
    energy: EnergyBreakdown
    residual: float
    iterations: int
    sym_class: str
    sign_change: bool
    nodal_thetas: list
    h1_norm: float
    converged: bool
    message: str = ""
    label: str = ""
    seed_degree: Optional[int] = None
    method: str = ""

    def to_dict(self, include_values: bool = True) -> dict:
        out = {
            "energy": self.energy.to_dict(),
            "residual": self.residual,
            "h1_norm": self.h1_norm,
            "iterations": self.iterations,
            "class": self.sym_class,
            "sign_change": self.sign_change,
            "nodal_thetas": list(self.nodal_thetas),
            "converged": self.converged,
            "message": self.message,
            "label": self.label,
            "seed_degree": self.seed_degree,
            "method": self.method,
        }
        if include_values:
            out["values"] = self.field.values.tolist()
        return out


# ---------------------------------------------------------------- energy pieces

def _nonlinear_parts(kernel: KernelMatrix, grid: ReducedGrid, params: ProblemParams, v: np.ndarray):
    p = params.p
    av = np.abs(v)
    f = av**p
    pot = kernel.matrix @ (grid.weights * f)
    # |v|^{p-2} v written as sign(v)|v|^{p-1} so that p < 2 is safe at zeros
    odd = np.sign(v) * av ** (p - 1.0)
    return f, pot, odd


def energy(grid: ReducedGrid, kernel: KernelMatrix, params: ProblemParams, v) -> EnergyBreakdown:
    vals = values_of(v)
    if vals.shape != (grid.size,) or kernel.size != grid.size:
        raise GridError("field, grid and kernel sizes do not match")
    quad = 0.5 * float(vals @ grid.h1_matrix() @ vals)
    nonloc = nonlocal_pairing(kernel, grid, params, vals) / (2.0 * params.p)
    return EnergyBreakdown(quad, nonloc, quad - nonloc)


def euclidean_gradient(grid, kernel, params, v) -> np.ndarray:
    vals = values_of(v)
    _, pot, odd = _nonlinear_parts(kernel, grid, params, vals)
    return grid.h1_matrix() @ vals - grid.weights * pot * odd


def gradient(grid: ReducedGrid, kernel: KernelMatrix, params: ProblemParams, v) -> FieldFunction:
    """H^1 Riesz representative of E'(v)."""
    vals = values_of(v)
    r = euclidean_gradient(grid, kernel, params, vals)
    try:
        g = grid.h1_solve(r)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(grid.h1_matrix())
        raise SolverError(f"H^1 solve failed (condition number {cond:.3e})") from exc
    sym = v.sym if isinstance(v, FieldFunction) else G_CLASS
    return FieldFunction(g, sym)


def residual_norm(grid, kernel, params, v) -> float:
    """H^1 norm of the gradient."""
    r = euclidean_gradient(grid, kernel, params, v)
    return float(math.sqrt(max(r @ grid.h1_solve(r), 0.0)))


def hessian(grid, kernel, params, v) -> np.ndarray:
    vals = values_of(v)
    p = params.p
    av = np.abs(vals)
    _, pot, odd = _nonlinear_parts(kernel, grid, params, vals)
    with np.errstate(divide="ignore"):
        even = np.where(av > 0, av ** (p - 2.0), 0.0)
    w = grid.weights
    left = w * odd
    right = w * p * odd
    h = grid.h1_matrix() - np.diag(w * (p - 1.0) * even * pot) - left[:, None] * kernel.matrix * right[None, :]
    return 0.5 * (h + h.T)


def nehari_scale(grid: ReducedGrid, kernel: KernelMatrix, params: ProblemParams, v) -> float:
    """t* with t* v on the Nehari manifold: t* = (A/B)^{1/(2p-2)}."""
    vals = values_of(v)
    a = float(vals @ grid.h1_matrix() @ vals)
    b = nonlocal_pairing(kernel, grid, params, vals)
    if not b > 0:
        raise SolverError("nehari_scale needs a nonzero field")
    return (a / b) ** (1.0 / (2.0 * params.p - 2.0))


def nehari_defect(grid, kernel, params, v) -> float:
    """<E'(v), v> relative to ||v||^2_{H^1}."""
    vals = values_of(v)
    a = float(vals @ grid.h1_matrix() @ vals)
    b = nonlocal_pairing(kernel, grid, params, vals)
    return abs(a - b) / a


def constant_solution(params: ProblemParams, j_one: float) -> float:
    """c* with n(n-2)/4 = C_mu c*^{2p-2}, C_mu = J_mu[1]."""
    return (params.mass / j_one) ** (1.0 / (2.0 * params.p - 2.0))


# ---------------------------------------------------------------- sign changes

def detect_sign_change(grid: ReducedGrid, v) -> tuple[bool, list]:
    vals = values_of(v)
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    tau = 1e-9 * scale
    changes = bool(scale > 0 and vals.min() < -tau and vals.max() > tau)
    if not changes:
        return False, []
    idx = np.nonzero(np.abs(vals) > tau)[0]
    roots = []
    for i, j in zip(idx[:-1], idx[1:]):
        if np.sign(vals[i]) == np.sign(vals[j]):
            continue
        lo, hi = grid.theta[i], grid.theta[j]

        def f(t):
            return float(grid.interpolate(vals, t)[0])

        try:
            roots.append(float(optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)))
        except ValueError:
            # interpolant disagrees with the node signs; fall back to the secant point
            roots.append(float(lo - vals[i] * (hi - lo) / (vals[j] - vals[i])))
    return True, roots


# ---------------------------------------------------------------- helpers

def _symmetrize(grid: ReducedGrid, vals: np.ndarray, cls: str) -> np.ndarray:
    if cls == GAMMA_CLASS:
        return 0.5 * (vals - grid.reflect(vals))
    return vals


def _check_class(grid: ReducedGrid, cls: str) -> None:
    if cls not in CLASSES:
        raise GridError(f"unknown class {cls!r}; expected one of {CLASSES}")
    if cls == GAMMA_CLASS and not grid.swappable:
        raise GridError(f"class Gamma needs equal blocks, got parts {grid.parts}")


def normalize_sign(vals: np.ndarray) -> np.ndarray:
    """Flip so that the first node value that is not negligibly small is positive."""
    scale = np.max(np.abs(vals)) if vals.size else 0.0
    for x in vals:
        if abs(x) > 1e-12 * scale:
            return vals if x > 0 else -vals
    return vals


def _classify_label(params: ProblemParams, cls: str, sign_change: bool) -> str:
    if sign_change:
        return "sign-changing"
    # positive solutions are classified as bubbles only in these ranges
    if params.n in (3, 4) or params.mu <= 4:
        return "bubble-lift"
    return "one-signed"


def _finish(grid, kernel, params, vals, cls, iterations, converged, message, opts,
            seed_degree=None, method="") -> SolveResult:
    vals = normalize_sign(_symmetrize(grid, np.asarray(vals, dtype=float), cls))
    res = residual_norm(grid, kernel, params, vals)
    ok = converged and res < opts.tol
    h1 = float(math.sqrt(max(vals @ grid.h1_matrix() @ vals, 0.0)))
    sc, nodes = detect_sign_change(grid, vals)
    if cls == GAMMA_CLASS and h1 > opts.tol and not sc:
        # cannot happen for a nonzero odd field; kept as a guard on the contract
        raise SolverError("nonzero Gamma-class field without a sign change")
    return SolveResult(
        field=FieldFunction(vals, cls), energy=energy(grid, kernel, params, vals), residual=res,
        iterations=iterations, sym_class=cls, sign_change=sc, nodal_thetas=nodes, h1_norm=h1,
        converged=ok, message=message if ok or message else f"residual {res:.3e} above tol",
        label=_classify_label(params, cls, sc), seed_degree=seed_degree, method=method,
    )


def _h1n(grid, v) -> float:
    return float(math.sqrt(max(v @ grid.h1_matrix() @ v, 0.0)))


# ---------------------------------------------------------------- Newton

def newton_polish(grid, kernel, params, v, cls: str, opts: SolveOptions,
                  deflate: Optional[list] = None) -> tuple[np.ndarray, int, bool]:
    """Damped Newton on the Euler-Lagrange equation with backtracking on the residual.

    With ``deflate`` (a list of known solutions) the residual is multiplied
    by prod_k (1 + 1/||v - v_k||^2)(1 + 1/||v + v_k||^2), which pushes
    iterates away from those solutions.
    """
    v = _symmetrize(grid, np.array(values_of(v), dtype=float), cls)
    m = grid.h1_matrix()
    deflate = deflate or []

    def defl(x):
        val, grad = 1.0, np.zeros_like(x)
        for vk in deflate:
            for sgn in (1.0, -1.0):
                d = x - sgn * vk
                d2 = float(d @ m @ d)
                fac = 1.0 + 1.0 / d2
                val *= fac
                grad += (-2.0 * (m @ d) / d2**2) / fac
        return val, grad

    def merit(x):
        return residual_norm(grid, kernel, params, x) * (defl(x)[0] if deflate else 1.0)

    phi = merit(v)
    # aim below the tolerance so that accepted results are not borderline
    target = 1e-3 * opts.tol

    def done(x):
        return residual_norm(grid, kernel, params, x) < opts.tol

    for it in range(1, opts.newton_max + 1):
        if residual_norm(grid, kernel, params, v) < target:
            return v, it - 1, True
        r = euclidean_gradient(grid, kernel, params, v)
        try:
            step = np.linalg.solve(hessian(grid, kernel, params, v), -r)
        except np.linalg.LinAlgError:
            return v, it, done(v)
        step = _symmetrize(grid, step, cls)
        if deflate:
            val, dlog = defl(v)
            denom = 1.0 + float(dlog @ step)
            if abs(denom) > 1e-12:
                step = step / denom
        lam = 1.0
        while lam >= 1e-8:
            trial = v + lam * step
            new = merit(trial)
            if np.isfinite(new) and new < (1.0 - 1e-4 * lam) * phi:
                break
            lam *= 0.5
        else:
            return v, it, done(v)
        v, phi = trial, new
    return v, opts.newton_max, done(v)


# ---------------------------------------------------------------- flow

def nehari_flow(grid, kernel, params, v, cls: str, opts: SolveOptions, stop_tol: float):
    """Armijo-backtracked H^1 gradient flow projected onto the Nehari manifold."""
    seed = _symmetrize(grid, np.array(v, dtype=float), cls)
    if _h1n(grid, seed) < opts.collapse_tol:
        raise SolverError("seed field is numerically zero")
    v = nehari_scale(grid, kernel, params, seed) * seed
    e = energy(grid, kernel, params, v).total
    step = opts.step0
    restarts = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        g = _symmetrize(grid, gradient(grid, kernel, params, v).values, cls)
        gn2 = float(g @ grid.h1_matrix() @ g)
        if math.sqrt(gn2) < stop_tol:
            return v, it - 1, True
        step = min(step * 2.0, opts.step0)
        while step >= opts.min_step:
            trial = v - step * g
            if _h1n(grid, trial) < opts.collapse_tol:
                step *= opts.shrink
                continue
            trial = nehari_scale(grid, kernel, params, trial) * trial
            e_new = energy(grid, kernel, params, trial).total
            if e_new <= e - opts.armijo * step * gn2:
                break
            step *= opts.shrink
        else:
            return v, it, False
        if _h1n(grid, trial) < opts.collapse_tol:
            restarts += 1
            if restarts > 3:
                raise SolverError("flow collapsed to the zero field")
            trial = nehari_scale(grid, kernel, params, seed) * seed
            e_new = energy(grid, kernel, params, trial).total
        v, e = trial, e_new
    return v, opts.max_iter, False


def solve_critical_point(grid: ReducedGrid, kernel: KernelMatrix, params: ProblemParams, cls: str,
                         seed, opts: Optional[SolveOptions] = None,
                         seed_degree: Optional[int] = None) -> SolveResult:
    opts = opts or SolveOptions()
    _check_class(grid, cls)
    vals = np.array(values_of(seed), dtype=float)
    if vals.shape != (grid.size,):
        raise GridError("seed does not live on the grid")
    v, it_flow, ok = nehari_flow(grid, kernel, params, vals, cls, opts, max(opts.switch_tol, opts.tol))
    if not ok:
        return _finish(grid, kernel, params, v, cls, it_flow, False,
                       f"gradient flow stalled after {it_flow} iterations", opts, seed_degree, "flow")
    v, it_newton, ok = newton_polish(grid, kernel, params, v, cls, opts)
    msg = "" if ok else "Newton polish did not reach tolerance"
    return _finish(grid, kernel, params, v, cls, it_flow + it_newton, ok, msg, opts, seed_degree,
                   "flow+newton")


# ---------------------------------------------------------------- local minimax

def _h1_orthonormalize(grid, vecs: list) -> list:
    m = grid.h1_matrix()
    out = []
    for v in vecs:
        w = v.copy()
        for q in out:
            w -= float(q @ m @ w) * q
        nrm = _h1n(grid, w)
        if nrm > 1e-10:
            out.append(w / nrm)
    return out


def local_minimax(grid, kernel, params, seed, found: list, cls: str, opts: SolveOptions):
    """Li-Zhou local minimax iteration for a critical point above ``found``.

    Each step maximizes E over the half space spanned by ``found`` and the
    current direction v (peak selection), then moves v against the gradient
    at the peak. Returns (peak, iterations, reached lmm_tol).
    """
    m = grid.h1_matrix()
    basis = _h1_orthonormalize(grid, [np.asarray(f, dtype=float) for f in found])

    def project(x):
        x = _symmetrize(grid, x, cls)
        for q in basis:
            x = x - float(q @ m @ x) * q
        return x

    v = project(np.array(seed, dtype=float))
    nv = _h1n(grid, v)
    if nv < 1e-10:
        raise SolverError("seed lies in the span of the solutions already found")
    v /= nv

    def peak(direction, start):
        cols = np.column_stack([direction] + basis) if basis else direction[:, None]

        def f(c):
            u = cols @ c
            return -energy(grid, kernel, params, u).total, -(cols.T @ euclidean_gradient(grid, kernel, params, u))

        res = optimize.minimize(f, start, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 500})
        return cols @ res.x, res.x, -res.fun

    c0 = np.zeros(1 + len(basis))
    c0[0] = nehari_scale(grid, kernel, params, v)
    u, coef, e = peak(v, c0)
    for it in range(1, opts.lmm_max_iter + 1):
        g = gradient(grid, kernel, params, u).values
        d = project(g)
        dn = _h1n(grid, d)
        if residual_norm(grid, kernel, params, u) < opts.lmm_tol:
            return u, it - 1, True
        sgn = 1.0 if coef[0] >= 0 else -1.0
        s = 1.0
        accepted = False
        while s >= 1e-10:
            trial = v - s * sgn * d
            trial /= _h1n(grid, trial)
            u_t, c_t, e_t = peak(trial, coef)
            if np.sign(c_t[0]) == sgn and e_t < e - 0.5e-4 * abs(coef[0]) * s * dn * dn:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            return u, it, False
        v, u, coef, e = trial, u_t, c_t, e_t
    return u, opts.lmm_max_iter, False


# ---------------------------------------------------------------- sequences

def seed_degrees(grid: ReducedGrid, cls: str, limit: int) -> list[int]:
    """Harmonic degrees that give nonzero seeds in the class, in increasing order."""
    out = []
    for k in range(grid.size):
        if cls == GAMMA_CLASS and k % 2 == 0:
            continue
        out.append(2 * k)
        if len(out) >= limit:
            break
    return out


def _seed_field(grid, cls, degree) -> np.ndarray:
    h = invariant_harmonic(grid, degree)
    vals = h.values if cls == G_CLASS else antisymmetrize(grid, h).values
    return vals


def _distinct(grid, v, found: list, rel: float = 1e-4) -> bool:
    if not found:
        return True
    norms = [_h1n(grid, f) for f in found] + [_h1n(grid, v)]
    thr = rel * max(norms)
    for f in found:
        if min(_h1n(grid, v - f), _h1n(grid, v + f)) <= thr:
            return False
    return True


def solve_sequence(grid: ReducedGrid, kernel: KernelMatrix, params: ProblemParams, cls: str,
                   count: int, opts: Optional[SolveOptions] = None,
                   max_seeds: Optional[int] = None) -> tuple[list[SolveResult], list[str]]:
    """Up to ``count`` distinct critical points in a class, sorted by energy.

    Returns (results, warnings); finding fewer than ``count`` is reported in
    the warnings rather than raised.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    opts = opts or SolveOptions()
    _check_class(grid, cls)
    warnings: list[str] = []
    degrees = seed_degrees(grid, cls, max_seeds or count + 6)
    results: list[SolveResult] = []
    found: list[np.ndarray] = []

    first = degrees[0]
    res = solve_critical_point(grid, kernel, params, cls, _seed_field(grid, cls, first), opts, first)
    if res.converged:
        results.append(res)
        found.append(res.field.values)
    else:
        warnings.append(f"ground state search from degree {first} failed: {res.message}")

    for deg in degrees[1:]:
        if len(results) >= count:
            break
        seed = _seed_field(grid, cls, deg)
        cand = None
        try:
            u, it, ok = local_minimax(grid, kernel, params, seed, found, cls, opts)
            v, itn, ok = newton_polish(grid, kernel, params, u, cls, opts)
            if ok and _distinct(grid, v, found):
                cand = _finish(grid, kernel, params, v, cls, it + itn, True, "", opts, deg, "minimax+newton")
        except (SolverError, np.linalg.LinAlgError) as exc:
            log.info("minimax from degree %d failed: %s", deg, exc)
        if cand is None and found:
            start = nehari_scale(grid, kernel, params, seed) * _symmetrize(grid, seed, cls)
            v, itn, ok = newton_polish(grid, kernel, params, start, cls, opts, deflate=found)
            if ok and _distinct(grid, v, found):
                v, _, ok = newton_polish(grid, kernel, params, v, cls, opts)
                if ok:
                    cand = _finish(grid, kernel, params, v, cls, itn, True, "", opts, deg, "deflated-newton")
        if cand is None:
            warnings.append(f"no new critical point from the degree-{deg} seed")
            continue
        results.append(cand)
        found.append(cand.field.values)

    if len(results) < count:
        warnings.append(f"found {len(results)} of {count} requested critical points")
    results.sort(key=lambda r: r.energy.total)
    return results, warnings


# ---------------------------------------------------------------- geometry check

@dataclass
class MountainPassReport:
    ell: int
    samples: int
    tail_min_energy: float
    tail_degrees: list
    head_degrees: list
    blowdown_radius: float
    blowdown_all_nonpositive: bool
    zero_energy: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mountain_pass_geometry_check(grid: ReducedGrid, kernel: KernelMatrix, params: ProblemParams,
                                 ell: int, samples: int = 200, seed: int = 12345) -> MountainPassReport:
    """Sample E on the unit H^1 sphere of the tail span and find a blow-down radius on the head span."""
    if ell % 2 or ell < 2:
        raise ValueError("ell must be a positive even degree")
    kmax = grid.size - 1
    if ell // 2 > kmax:
        raise GridError(f"degree {ell} exceeds the design degree {grid.design_degree}")
    rng = np.random.default_rng(seed)
    basis = orthonormal_basis(grid)
    k0 = ell // 2
    tail = basis[k0:]
    head = basis[:k0]
    tail_min = math.inf
    for _ in range(samples):
        # coefficients decay with degree so that samples resemble H^1 fields
        coef = rng.standard_normal(tail.shape[0]) / (1.0 + np.arange(tail.shape[0]))
        v = coef @ tail
        v /= _h1n(grid, v)
        tail_min = min(tail_min, energy(grid, kernel, params, v).total)
    p = params.p
    radius = 0.0
    all_neg = True
    for _ in range(samples):
        v = rng.standard_normal(head.shape[0]) @ head
        v /= _h1n(grid, v)
        b = nonlocal_pairing(kernel, grid, params, v)
        r_v = (p / b) ** (1.0 / (2.0 * p - 2.0))
        radius = max(radius, r_v)
        all_neg &= energy(grid, kernel, params, 1.000001 * r_v * v).total <= 0.0
    return MountainPassReport(
        ell=ell, samples=samples, tail_min_energy=float(tail_min),
        tail_degrees=[2 * k for k in range(k0, kmax + 1)][:1] + ["..."] + [grid.design_degree],
        head_degrees=[2 * k for k in range(k0)], blowdown_radius=float(radius),
        blowdown_all_nonpositive=bool(all_neg),
        zero_energy=energy(grid, kernel, params, np.zeros(grid.size)).total,
    )
