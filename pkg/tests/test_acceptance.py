"""Acceptance criteria 1-12, one reported line per criterion."""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from choquard.cli import main
from choquard.geometry import build_grid, h1_norm, invariant_harmonic, harmonic_eigenvalue
from choquard.kernel import apply_Jmu, assemble_kernel, funk_hecke_eigenvalue, nl_norm
from choquard.ledger import build_q_sequence, case1_interval_nonempty, necessary_H_gate, rational_sweep
from choquard.params import Bubble, bubble_eval, make_params
from choquard.runner import ResultEnvelope
from choquard.solver import (constant_solution, energy, gradient, solve_critical_point,
                             solve_sequence)
from choquard.stereo import chordal_identity_residual, normalize, pull_back, stereo_inverse, stereo_project

SIZE = 64


def report(log, k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}"
    log.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def n3(kernel_cache):
    params = make_params(3, 2)
    grid = build_grid(params, (2, 2), SIZE)
    return params, grid, assemble_kernel(grid, params, cache_dir=kernel_cache)


def test_criterion_01_exponents(acceptance_log):
    t0 = time.perf_counter()
    ok = True
    for n in range(3, 41):
        for k in range(1, 50):
            mu = Fraction(k * n, 50)
            p = make_params(n, mu)
            ok &= isinstance(p.two_star_mu, Fraction) and (n - 2) * p.two_star_mu + mu == 2 * n
    dt = time.perf_counter() - t0
    report(acceptance_log, 1, ok and dt < 1, f"(n-2)2*_mu + mu = 2n exact on 1862 rational pairs, {dt:.2f}s")


def test_criterion_02_stereographic(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    x = rng.standard_normal((10_000, 3)) * 3
    rt = float(np.max(np.abs(stereo_project(stereo_inverse(x)) - x)))
    a = normalize(rng.standard_normal((10_000, 4)))
    b = normalize(rng.standard_normal((10_000, 4)))
    chord = float(np.max(chordal_identity_residual(a, b)))
    p = make_params(3, 1)
    xi = normalize(rng.standard_normal((100, 4)))
    lift = pull_back(lambda y: bubble_eval(Bubble((0.0, 0.0, 0.0), 1.0), p, y), xi, 3)
    dev = float(np.max(np.abs(lift - 3 ** 0.25 * 2 ** -0.5)))
    dt = time.perf_counter() - t0
    ok = rt < 1e-12 and chord < 1e-11 and dev < 1e-12 and dt < 5
    report(acceptance_log, 2, ok, f"round trip {rt:.1e}, chordal {chord:.1e}, bubble lift {dev:.1e}, {dt:.2f}s")


def test_criterion_03_volume_spectrum(acceptance_log):
    t0 = time.perf_counter()
    worst_vol = worst_eig = 0.0
    for n, parts in [(3, (2, 2)), (4, (3, 2)), (5, (3, 3))]:
        grid = build_grid(make_params(n, 1), parts, SIZE)
        ref = 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)
        worst_vol = max(worst_vol, abs(grid.weights.sum() - ref))
        h = invariant_harmonic(grid, 2).values
        # Rayleigh quotient from the H^1 form with mass removed
        dir_ = h @ grid.h1_matrix() @ h - grid.params.mass * np.sum(grid.weights * h * h)
        lam = dir_ / np.sum(grid.weights * h * h)
        worst_eig = max(worst_eig, abs(lam - 2 * (2 + n - 1)))
        assert harmonic_eigenvalue(n, 2) == 2 * (n + 1)
    dt = time.perf_counter() - t0
    ok = worst_vol < 1e-10 and worst_eig < 1e-8 and dt < 5
    report(acceptance_log, 3, ok, f"volume err {worst_vol:.1e}, degree-2 eigenvalue err {worst_eig:.1e}, {dt:.2f}s")


def test_criterion_04_kernel(acceptance_log):
    params = make_params(3, 2)
    grid = build_grid(params, (2, 2), SIZE)
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        kern = assemble_kernel(grid, params, use_cache=False)
    dt = time.perf_counter() - t0
    j1 = apply_Jmu(kern, grid, np.ones(SIZE)).values
    j1_err = float(np.max(np.abs(j1 / (2 * math.pi**2) - 1)))
    rows = kern.matrix @ grid.weights
    row_spread = float((rows.max() - rows.min()) / rows.max())
    fh = 0.0
    for deg in (0, 2, 4):
        h = invariant_harmonic(grid, deg).values
        lam = funk_hecke_eigenvalue(params, deg)
        fh = max(fh, float(np.max(np.abs(apply_Jmu(kern, grid, h).values - lam * h)) / np.max(np.abs(lam * h))))
    ok = j1_err < 1e-6 and row_spread < 1e-7 and fh < 1e-6 and dt < 60
    report(acceptance_log, 4, ok,
           f"J[1] rel err {j1_err:.1e}, row spread {row_spread:.1e}, Funk-Hecke {fh:.1e}, "
           f"assembly {dt:.1f}s single-threaded")


def test_criterion_05_nl_norm(acceptance_log, n3):
    params, grid, kern = n3
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    hom = 0.0
    tri = True
    for _ in range(100):
        u, v = rng.standard_normal((2, SIZE))
        nu, nv = nl_norm(kern, grid, params, u), nl_norm(kern, grid, params, v)
        c = rng.uniform(-5, 5)
        hom = max(hom, abs(nl_norm(kern, grid, params, c * u) - abs(c) * nu) / (abs(c) * nu))
        tri &= nl_norm(kern, grid, params, u + v) <= nu + nv
    dt = time.perf_counter() - t0
    ok = hom < 1e-10 and tri and dt < 10
    report(acceptance_log, 5, ok, f"homogeneity {hom:.1e}, triangle inequality on 100 pairs {tri}, {dt:.2f}s")


def test_criterion_06_gradient(acceptance_log, kernel_cache):
    t0 = time.perf_counter()
    worst = 0.0
    for n, parts, mu in [(3, (2, 2), 2), (4, (3, 2), 1), (5, (3, 3), 3)]:
        params = make_params(n, mu)
        grid = build_grid(params, parts, SIZE)
        kern = assemble_kernel(grid, params, cache_dir=kernel_cache)
        M = grid.h1_matrix()
        rng = np.random.default_rng(n)
        for _ in range(50):
            v = rng.standard_normal(SIZE)
            d = rng.standard_normal(SIZE)
            h = 1e-5
            fd = (energy(grid, kern, params, v + h * d).total
                  - energy(grid, kern, params, v - h * d).total) / (2 * h)
            an = gradient(grid, kern, params, v).values @ M @ d
            worst = max(worst, abs(fd - an) / max(abs(an), 1.0))
    dt = time.perf_counter() - t0
    report(acceptance_log, 6, worst < 1e-6 and dt < 60, f"max relative FD error {worst:.1e} over 150 fields, {dt:.1f}s")


def test_criterion_07_bubble_lift(acceptance_log, n3):
    params, grid, kern = n3
    t0 = time.perf_counter()
    res = solve_critical_point(grid, kern, params, "G", np.ones(SIZE))
    dt = time.perf_counter() - t0
    cstar = (3 / (8 * math.pi**2)) ** (1 / 6)
    dev = float(np.max(np.abs(res.field.values - cstar)))
    formula = constant_solution(params, float(apply_Jmu(kern, grid, np.ones(SIZE)).values[0]))
    ok = res.converged and res.residual < 1e-8 and dev < 1e-7 and abs(formula - cstar) < 1e-7 and dt < 30
    report(acceptance_log, 7, ok, f"residual {res.residual:.1e}, |v - c*| {dev:.1e}, {dt:.2f}s")


def test_criterion_08_sign_change(acceptance_log, n3, kernel_cache):
    t0 = time.perf_counter()
    params, grid, kern = n3
    results = []
    seqs, _ = solve_sequence(grid, kern, params, "Gamma", 2)
    results += seqs
    for n, parts, mu in [(5, (3, 3), 3), (3, (2, 2), Fraction(1, 2))]:
        p = make_params(n, mu)
        g = build_grid(p, parts, SIZE)
        k = assemble_kernel(g, p, cache_dir=kernel_cache)
        results.append(solve_critical_point(g, k, p, "Gamma", invariant_harmonic(g, 2)))
    dt = time.perf_counter() - t0
    conv = [r for r in results if r.converged]
    ok = len(conv) == len(results) and all(r.sign_change for r in conv)
    node = max(min(abs(t - math.pi / 4) for t in r.nodal_thetas) for r in conv)
    ok = ok and node < 1e-6 and dt < 120
    report(acceptance_log, 8, ok, f"{len(conv)} Gamma solutions all sign-changing, node offset {node:.1e}, {dt:.1f}s")


def test_criterion_09_multiplicity(acceptance_log, tmp_path, kernel_cache):
    out = tmp_path / "solve.json"
    t0 = time.perf_counter()
    code = main(["--cache-dir", str(kernel_cache), "--out", str(out), "solve", "--n", "3", "--mu", "2",
                 "--parts", "2,2", "--class", "G", "--count", "3", "--grid-size", str(SIZE)])
    dt = time.perf_counter() - t0
    sols = json.loads(out.read_text())["payload"]["solutions"]
    params = make_params(3, 2)
    grid = build_grid(params, (2, 2), SIZE)
    e = [s["energy"]["total"] for s in sols]
    h = [s["h1_norm"] for s in sols]
    vals = [np.array(s["values"]) for s in sols]
    biggest = max(h)
    dist = min(h1_norm(grid, vals[i] - sgn * vals[j]) for i in range(len(vals)) for j in range(i)
               for sgn in (1, -1))
    ok = (code == 0 and len(sols) >= 3 and all(a < b for a, b in zip(e, e[1:]))
          and all(a < b for a, b in zip(h, h[1:])) and max(s["residual"] for s in sols) < 1e-7
          and dist > 1e-4 * biggest and dt < 600)
    report(acceptance_log, 9, ok, f"{len(sols)} critical points, energies {', '.join(f'{x:.4f}' for x in e)}, "
                                  f"min pairwise distance/max norm {dist / biggest:.2f}, {dt:.1f}s")


def test_criterion_10_energy_identity(acceptance_log, n3, kernel_cache):
    worst = 0.0
    count = 0
    cases = [((3, (2, 2), 2), ["G", "Gamma"]), ((4, (3, 2), 1), ["G"]), ((5, (3, 3), 3), ["G", "Gamma"])]
    for (n, parts, mu), classes in cases:
        p = make_params(n, mu)
        g = build_grid(p, parts, SIZE)
        k = assemble_kernel(g, p, cache_dir=kernel_cache)
        for cls in classes:
            res, _ = solve_sequence(g, k, p, cls, 2)
            for r in res:
                if not r.converged:
                    continue
                expected = (0.5 - 1 / (2 * p.p)) * r.h1_norm**2
                worst = max(worst, abs(r.energy.total - expected) / abs(expected))
                count += 1
    report(acceptance_log, 10, worst < 1e-6 and count >= 8, f"max relative deviation {worst:.1e} over {count} solutions")


def test_criterion_11_ledger(acceptance_log):
    t0 = time.perf_counter()
    rep = build_q_sequence(make_params(5, 1))
    base_ok = rep.N == 2 and rep.valid and rep.exact and all(isinstance(q, Fraction) for q in rep.q_sequence)
    sweep = rational_sweep()
    gate_ok = all(necessary_H_gate(p) and build_q_sequence(p).valid for p in sweep)
    ext = rational_sweep(extended=True)
    case1_ok = all(case1_interval_nonempty(p) for p in ext) and any(p.mu >= p.n - 2 for p in ext)
    dt = time.perf_counter() - t0
    ok = base_ok and gate_ok and case1_ok and dt < 1
    report(acceptance_log, 11, ok, f"N(5,1)={rep.N}, H gate on {len(sweep)} cases, case-1 window on {len(ext)} cases, {dt:.2f}s")


def test_criterion_12_determinism(acceptance_log, tmp_path, kernel_cache):
    out = tmp_path / "det.json"
    argv = ["--deterministic", "--cache-dir", str(kernel_cache), "--out", str(out), "solve", "--n", "3",
            "--mu", "2", "--parts", "2,2", "--class", "Gamma", "--count", "2", "--grid-size", str(SIZE)]
    blobs = []
    for _ in range(2):
        assert main(argv) == 0
        blobs.append(ResultEnvelope.from_json(out.read_text()).stable_json().encode())
    argv2 = ["--deterministic", "--out", str(out), "ledger", "--n", "6", "--mu", "3/2"]
    ledgers = []
    for _ in range(2):
        assert main(argv2) == 0
        ledgers.append(ResultEnvelope.from_json(out.read_text()).stable_json().encode())
    ok = blobs[0] == blobs[1] and ledgers[0] == ledgers[1]
    report(acceptance_log, 12, ok, f"two deterministic solve runs and two ledger runs byte-identical excluding timings "
                                   f"({len(blobs[0])} bytes)")
