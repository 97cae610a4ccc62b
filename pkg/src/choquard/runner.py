"""Command implementations, run configuration and the JSON result envelope."""

from __future__ import annotations

import contextlib
import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import geometry, kernel as kern, ledger, solver, stereo, symmetry
from .params import Bubble, ParameterError, ProblemParams, bubble_constant, bubble_eval, make_params

SCHEMA_VERSION = 1
COMMANDS = ("verify", "atlas", "kernel", "grid", "solve", "ledger", "bubble", "plot-data")
PLOT_KINDS = ("profile", "energy-ladder", "kernel-heatmap")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class RunError(Exception):
    exit_code = EXIT_NUMERICAL


class ValidationError(RunError):
    exit_code = EXIT_VALIDATION


class NumericalFailure(RunError):
    exit_code = EXIT_NUMERICAL


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)
    out: Optional[str] = None
    cache_dir: Optional[str] = None
    deterministic: bool = False

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")

    def echo(self) -> dict:
        return {"command": self.command, "options": dict(self.options), "out": self.out,
                "deterministic": self.deterministic}


@dataclass
class ResultEnvelope:
    command: str
    config: dict
    payload: dict
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"

    def stable_json(self) -> str:
        """Serialization without timings, the part that must be reproducible."""
        d = self.to_dict()
        d.pop("timings")
        return json.dumps(d, sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultEnvelope":
        d = json.loads(text)
        if not isinstance(d, dict) or "schema_version" not in d:
            raise ValidationError("not a result envelope")
        if d["schema_version"] > SCHEMA_VERSION:
            raise ValidationError(f"envelope schema {d['schema_version']} is newer than {SCHEMA_VERSION}")
        return cls(**d)


def error_payload(exc: BaseException, code: int) -> dict:
    return {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, RunError):
        return exc.exit_code
    if isinstance(exc, (solver.SolverError, ledger.LedgerInconsistency, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ParameterError, symmetry.DescriptorError, geometry.GridError,
                        ledger.LedgerNotApplicable, kern.KernelError, KeyError, ValueError)):
        return EXIT_VALIDATION
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_NUMERICAL


# ---------------------------------------------------------------- shared setup

def _params(opts: dict) -> ProblemParams:
    if "n" not in opts or "mu" not in opts:
        raise ValidationError("--n and --mu are required")
    return make_params(int(opts["n"]), str(opts["mu"]))


def _parts(opts: dict, params: ProblemParams) -> tuple[int, int]:
    raw = opts.get("parts")
    if raw is None:
        n = params.n
        parts = ((n + 1) // 2 + (n + 1) % 2, (n + 1) // 2) if n > 3 else (2, 2)
        parts = (max(parts), min(parts))
    else:
        parts = symmetry.parse_parts(raw) if isinstance(raw, str) else tuple(raw)
    if len(parts) != 2:
        raise ValidationError("the reduced solver supports two blocks, e.g. --parts 2,2")
    return parts


def _grid_and_kernel(cfg: RunConfig, with_kernel: bool = True):
    opts = cfg.options
    params = _params(opts)
    parts = _parts(opts, params)
    grid = geometry.build_grid(params, parts, int(opts.get("grid_size", geometry.DEFAULT_GRID)))
    if not with_kernel:
        return params, grid, None
    kernel = kern.assemble_kernel(grid, params, cache_dir=cfg.cache_dir)
    return params, grid, kernel


def _grid_dict(grid: geometry.ReducedGrid, full: bool = True) -> dict:
    out = {"n": grid.params.n, "parts": list(grid.parts), "size": grid.size}
    if full:
        out["theta"] = grid.theta.tolist()
        out["weights"] = grid.weights.tolist()
    return out


def _check(value: float, tol: float, passed: Optional[bool] = None) -> dict:
    ok = bool(value < tol) if passed is None else bool(passed)
    return {"value": float(value), "tol": tol, "passed": ok}


# ---------------------------------------------------------------- commands

def cmd_verify(cfg: RunConfig, warnings: list) -> dict:
    params, grid, kernel = _grid_and_kernel(cfg)
    n = params.n
    rng = np.random.default_rng(int(cfg.options.get("seed", 7)))
    checks = {}

    ident = (n - 2) * params.two_star_mu + params.mu - 2 * n
    checks["exponent_identity"] = _check(abs(float(ident)), 1e-14, ident == 0)

    xi = stereo.normalize(rng.standard_normal((200, n + 1)))
    xi = xi[1.0 + xi[:, -1] > 1e-3]
    rt = np.max(np.abs(stereo.stereo_inverse(stereo.stereo_project(xi)) - xi))
    checks["stereo_round_trip"] = _check(rt, 1e-12)
    ch = np.max(stereo.chordal_identity_residual(xi[:-1], xi[1:]))
    checks["chordal_identity"] = _check(ch, 1e-11)

    vol_ref = stereo.sphere_area(n + 1)
    checks["volume"] = _check(abs(grid.volume - vol_ref) / vol_ref, 1e-10)
    h = geometry.invariant_harmonic(grid, 2)
    lam = geometry.harmonic_eigenvalue(n, 2)
    lap = geometry.apply_laplacian(grid, h).values
    checks["eigenvalue_degree_2"] = _check(np.max(np.abs(lap + lam * h.values)) / (lam * np.max(np.abs(h.values))), 1e-8)

    K = kernel.matrix
    checks["kernel_symmetric"] = _check(np.max(np.abs(K - K.T)) / np.max(np.abs(K)), 1e-10)
    checks["kernel_positive"] = _check(-float(K.min()), 0.0, bool(K.min() > 0))
    rows = K @ grid.weights
    checks["row_sum_constancy"] = _check((rows.max() - rows.min()) / rows.max(), 1e-7)
    j_one = kern.funk_hecke_closed_form(params, 0)
    checks["J_mu_of_one"] = _check(np.max(np.abs(rows - j_one)) / j_one, 1e-6)
    for deg in (0, 2, 4):
        hv = geometry.invariant_harmonic(grid, deg).values
        jv = kern.apply_Jmu(kernel, grid, hv).values
        ev = kern.funk_hecke_eigenvalue(params, deg)
        checks[f"funk_hecke_degree_{deg}"] = _check(np.max(np.abs(jv - ev * hv)) / np.max(np.abs(ev * hv)), 1e-6)
        checks[f"funk_hecke_closed_form_{deg}"] = _check(abs(ev / kern.funk_hecke_closed_form(params, deg) - 1), 1e-9)

    basis = geometry.orthonormal_basis(grid, min(grid.size - 1, 12))
    worst = 0.0
    for _ in range(5):
        v = (rng.standard_normal(basis.shape[0]) / (1.0 + np.arange(basis.shape[0]))) @ basis
        phi = (rng.standard_normal(basis.shape[0]) / (1.0 + np.arange(basis.shape[0]))) @ basis
        eps = 1e-5
        fd = (solver.energy(grid, kernel, params, v + eps * phi).total
              - solver.energy(grid, kernel, params, v - eps * phi).total) / (2 * eps)
        an = geometry.h1_inner(grid, solver.gradient(grid, kernel, params, v), phi)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-300))
    checks["gradient_finite_difference"] = _check(worst, 1e-6)

    c_star = solver.constant_solution(params, j_one)
    res = solver.solve_critical_point(grid, kernel, params, geometry.G_CLASS, np.ones(grid.size))
    checks["constant_solution"] = _check(float(np.max(np.abs(res.field.values - c_star))), 1e-7,
                                         res.converged and np.max(np.abs(res.field.values - c_star)) < 1e-7)
    checks["nehari_identity"] = _check(solver.nehari_defect(grid, kernel, params, res.field), 1e-7)
    e = res.energy.total
    ident_e = abs(e - (0.5 - 1.0 / (2 * params.p)) * res.h1_norm**2) / e
    checks["energy_identity"] = _check(ident_e, 1e-6)

    return {
        "params": params.to_dict(),
        "grid": _grid_dict(grid, full=False),
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks.values()),
        "c_star": c_star,
        "J_mu_one": j_one,
        "kernel_hash": kernel.digest,
    }


def cmd_atlas(cfg: RunConfig, warnings: list) -> dict:
    n = int(cfg.options.get("n", 0))
    out = symmetry.atlas(n, int(cfg.options.get("max_degree", 12)))
    if not out["any_property_P"]:
        warnings.append(f"no block descriptor of S^{n} has a block swap")
    return out


def _write_csv(path: str, header: list, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    except OSError as exc:
        raise exc


def cmd_kernel(cfg: RunConfig, warnings: list) -> dict:
    params, grid, kernel = _grid_and_kernel(cfg)
    if cfg.options.get("csv"):
        _write_csv(cfg.options["csv"], ["theta_i", "theta_j", "K"], kern.kernel_csv_rows(kernel, grid))
    meta = {k: v for k, v in kernel.meta.items() if k != "from_cache"}
    return {
        "params": params.to_dict(),
        "grid": _grid_dict(grid),
        "meta": meta,
        "kernel_hash": kernel.digest,
        "matrix": kernel.matrix.tolist(),
    }


def cmd_grid(cfg: RunConfig, warnings: list) -> dict:
    params, grid, _ = _grid_and_kernel(cfg, with_kernel=False)
    if cfg.options.get("csv"):
        _write_csv(cfg.options["csv"], ["theta", "weight"], geometry.grid_csv_rows(grid))
    return {"params": params.to_dict(), "grid": _grid_dict(grid), "volume": grid.volume,
            "sphere_volume": stereo.sphere_area(params.n + 1)}


def _solve_options(opts: dict) -> solver.SolveOptions:
    so = solver.SolveOptions()
    if opts.get("tol") is not None:
        so.tol = float(opts["tol"])
    if opts.get("max_iter") is not None:
        so.max_iter = int(opts["max_iter"])
    return so


def cmd_solve(cfg: RunConfig, warnings: list) -> dict:
    params, grid, kernel = _grid_and_kernel(cfg)
    cls = cfg.options.get("cls", geometry.G_CLASS)
    count = int(cfg.options.get("count", 1))
    so = _solve_options(cfg.options)
    results, warn = solver.solve_sequence(grid, kernel, params, cls, count, so)
    warnings.extend(warn)
    if not results:
        raise NumericalFailure("no critical point converged; " + "; ".join(warn))
    payload = {
        "params": params.to_dict(),
        "grid": _grid_dict(grid),
        "class": cls,
        "solutions": [r.to_dict() for r in results],
        "provenance": {"kernel_hash": kernel.digest, "seed_degrees": [r.seed_degree for r in results],
                       "kernel_estimated_error": kernel.meta.get("estimated_error")},
    }
    if cfg.options.get("compare_classes") and cls == geometry.GAMMA_CLASS:
        g_results, _ = solver.solve_sequence(grid, kernel, params, geometry.G_CLASS, count + 1, so)
        g_energies = [r.energy.total for r in g_results]
        payload["class_comparison"] = {
            "G_energies": g_energies,
            "matches": [
                any(abs(r.energy.total - e) <= 1e-6 * abs(e) for e in g_energies) for r in results
            ],
        }
    return payload


def cmd_ledger(cfg: RunConfig, warnings: list) -> dict:
    params = _params(cfg.options)
    report = ledger.build_q_sequence(params)
    out = report.to_dict()
    out["case"] = ledger.classify_case(params).to_dict()
    if not report.exact:
        warnings.append("mu is not rational; gates were evaluated in floating point")
    return out


def cmd_bubble(cfg: RunConfig, warnings: list) -> dict:
    params = _params(cfg.options)
    n = params.n
    rng = np.random.default_rng(int(cfg.options.get("seed", 11)))
    xi = stereo.normalize(rng.standard_normal((int(cfg.options.get("samples", 100)), n + 1)))
    xi = xi[1.0 + xi[:, -1] > 1e-6]
    b = Bubble(tuple([0.0] * n), 1.0)
    lifted = stereo.pull_back(lambda x: bubble_eval(b, params, x), xi, n)
    expected = bubble_constant(n) * 2.0 ** (-(n - 2) / 2)
    j_one = kern.funk_hecke_closed_form(params, 0)
    c_star = solver.constant_solution(params, j_one)
    return {
        "params": params.to_dict(),
        "bubble_constant": bubble_constant(n),
        "lift_constant": expected,
        "lift_max_deviation": float(np.max(np.abs(lifted - expected))),
        "samples": int(xi.shape[0]),
        "J_mu_one": j_one,
        "c_star": c_star,
        # the constant solution c* is the lift of a U with a = c* / lift_constant
        "amplitude": c_star / expected,
    }


# ---------------------------------------------------------------- plot data

def emit_plot_data(result: ResultEnvelope, kind: str, path: str, index: int = 0) -> int:
    """Write a CSV series from an envelope; returns the number of data rows."""
    pl = result.payload
    if kind == "profile":
        sols = pl.get("solutions")
        if not sols or "grid" not in pl or "theta" not in pl["grid"]:
            raise ValidationError("profile needs a solve envelope with grid nodes")
        if not 0 <= index < len(sols):
            raise ValidationError(f"solution index {index} out of range")
        rows = list(zip(pl["grid"]["theta"], sols[index]["values"]))
        _write_csv(path, ["theta", "value"], rows)
    elif kind == "energy-ladder":
        sols = pl.get("solutions")
        if not sols:
            raise ValidationError("energy-ladder needs a solve envelope")
        rows = [(i, s["energy"]["total"], s["h1_norm"]) for i, s in enumerate(sols)]
        _write_csv(path, ["index", "energy", "h1_norm"], rows)
    elif kind == "kernel-heatmap":
        if "matrix" not in pl:
            raise ValidationError("kernel-heatmap needs a kernel envelope")
        th = pl["grid"]["theta"]
        mat = pl["matrix"]
        rows = [(th[i], th[j], mat[i][j]) for i in range(len(th)) for j in range(len(th))]
        _write_csv(path, ["theta_i", "theta_j", "K"], rows)
    else:
        raise ValidationError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    return len(rows)


def cmd_plot_data(cfg: RunConfig, warnings: list) -> dict:
    src = cfg.options.get("input")
    dest = cfg.options.get("csv")
    if not src or not dest:
        raise ValidationError("plot-data needs --input <envelope.json> and --csv <file>")
    env = ResultEnvelope.from_json(Path(src).read_text())
    kind = cfg.options.get("kind", "profile")
    nrows = emit_plot_data(env, kind, dest, int(cfg.options.get("index", 0)))
    return {"kind": kind, "source_command": env.command, "rows": nrows, "csv": dest}


HANDLERS: dict[str, Callable[[RunConfig, list], dict]] = {
    "verify": cmd_verify,
    "atlas": cmd_atlas,
    "kernel": cmd_kernel,
    "grid": cmd_grid,
    "solve": cmd_solve,
    "ledger": cmd_ledger,
    "bubble": cmd_bubble,
    "plot-data": cmd_plot_data,
}


@contextlib.contextmanager
def _thread_mode(deterministic: bool):
    if not deterministic:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=1):
        yield


def dispatch(cfg: RunConfig) -> ResultEnvelope:
    """Run a command and return its envelope; writes it to ``cfg.out`` when set."""
    cfg.validate()
    warnings: list = []
    t0 = time.perf_counter()
    with _thread_mode(cfg.deterministic):
        payload = HANDLERS[cfg.command](cfg, warnings)
    env = ResultEnvelope(cfg.command, cfg.echo(), payload, warnings,
                         {"total_seconds": time.perf_counter() - t0})
    if cfg.out:
        Path(cfg.out).write_text(env.to_json())
    return env


def is_finite_json(obj) -> bool:
    if isinstance(obj, float):
        return math.isfinite(obj)
    if isinstance(obj, dict):
        return all(is_finite_json(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return all(is_finite_json(v) for v in obj)
    return True
