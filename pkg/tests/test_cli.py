import csv
import json
import math

import pytest

from choquard.cli import main
from choquard.runner import ResultEnvelope, RunConfig, dispatch


@pytest.fixture(autouse=True)
def _cache(kernel_cache, monkeypatch):
    monkeypatch.setenv("CHOQUARD_CACHE_DIR", str(kernel_cache))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_verify_passes(capsys):
    code, env = run(capsys, "verify", "--n", "3", "--mu", "2", "--parts", "2,2", "--grid-size", "32")
    assert code == 0
    assert env["payload"]["all_passed"]
    assert env["payload"]["J_mu_one"] == pytest.approx(2 * math.pi**2, rel=1e-6)
    assert all(c["passed"] if isinstance(c, dict) else c for c in env["payload"]["checks"].values())


def test_ledger_envelope(capsys):
    code, env = run(capsys, "ledger", "--n", "5", "--mu", "1")
    assert code == 0
    p = env["payload"]
    assert p["N"] == 2 and p["valid"] and all(p["checks"].values())
    assert p["inverse_q_sequence"] == ["7/30", "1/15"]
    assert env["schema_version"] == 1 and "timings" in env


def test_solve_gamma(capsys):
    code, env = run(capsys, "solve", "--n", "3", "--mu", "2", "--parts", "2,2", "--class", "Gamma",
                    "--count", "1", "--grid-size", "32")
    assert code == 0
    sol = env["payload"]["solutions"][0]
    assert sol["sign_change"] is True
    assert sol["nodal_thetas"][0] == pytest.approx(math.pi / 4, abs=1e-6)
    assert set(sol["energy"]) == {"quadratic", "nonlocal", "total"}
    assert len(sol["values"]) == 32
    prov = env["payload"]["provenance"]
    assert len(prov["kernel_hash"]) == 64 and prov["seed_degrees"] == [2]


def test_solve_compare_classes(capsys):
    code, env = run(capsys, "solve", "--n", "3", "--mu", "2", "--parts", "2,2", "--class", "Gamma",
                    "--count", "1", "--grid-size", "32", "--compare-classes")
    assert code == 0
    assert "class_comparison" in env["payload"]


@pytest.mark.parametrize("argv, code", [
    (["ledger", "--n", "5", "--mu", "7"], 2),
    (["ledger", "--n", "5", "--mu", "3"], 0),
    (["grid", "--n", "4", "--mu", "1", "--parts", "2,2"], 2),
    (["grid", "--n", "3", "--mu", "1", "--parts", "2,2", "--grid-size", "4"], 2),
    (["solve", "--n", "4", "--mu", "1", "--parts", "3,2", "--class", "Gamma", "--grid-size", "16"], 2),
    (["plot-data", "--input", "/nonexistent/env.json", "--csv", "/tmp/x.csv"], 4),
])
def test_exit_codes(capsys, argv, code):
    got, env = run(capsys, *argv)
    assert got == code
    if code:
        assert env["error"]["exit_code"] == code and env["error"]["message"]


def test_parse_error_is_validation(capsys):
    assert main(["solve", "--n", "3"]) == 2
    capsys.readouterr()


def test_out_flag_both_positions(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["--out", str(a), "ledger", "--n", "5", "--mu", "1"]) == 0
    assert main(["ledger", "--n", "5", "--mu", "1", "--out", str(b)]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(a.read_text())["payload"] == json.loads(b.read_text())["payload"]


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_plot_data_kinds(tmp_path, capsys):
    env_path = tmp_path / "solve.json"
    assert main(["solve", "--n", "3", "--mu", "2", "--parts", "2,2", "--count", "3", "--grid-size", "32",
                 "--out", str(env_path)]) == 0
    prof = tmp_path / "profile.csv"
    assert main(["plot-data", "--input", str(env_path), "--kind", "profile", "--csv", str(prof)]) == 0
    rows = _csv(prof)
    assert rows[0] == ["theta", "value"] and len(rows) == 33
    assert all(float(r[1]) == pytest.approx(0.5798138525786449, abs=1e-7) for r in rows[1:])
    lad = tmp_path / "ladder.csv"
    assert main(["plot-data", "--input", str(env_path), "--kind", "energy-ladder", "--csv", str(lad)]) == 0
    rows = _csv(lad)
    assert rows[0] == ["index", "energy", "h1_norm"] and len(rows) == 4
    h = [float(r[2]) for r in rows[1:]]
    assert all(x < y for x, y in zip(h, h[1:]))
    missing = tmp_path / "heat.csv"
    assert main(["plot-data", "--input", str(env_path), "--kind", "kernel-heatmap", "--csv", str(missing)]) != 0

    kern_env = tmp_path / "kernel.json"
    assert main(["kernel", "--n", "3", "--mu", "2", "--parts", "2,2", "--grid-size", "16",
                 "--out", str(kern_env)]) == 0
    heat = tmp_path / "heat2.csv"
    assert main(["plot-data", "--input", str(kern_env), "--kind", "kernel-heatmap", "--csv", str(heat)]) == 0
    assert len(_csv(heat)) == 16 * 16 + 1
    capsys.readouterr()


def test_kernel_and_grid_csv(tmp_path, capsys):
    kc, gc = tmp_path / "k.csv", tmp_path / "g.csv"
    assert main(["kernel", "--n", "4", "--mu", "1", "--parts", "3,2", "--grid-size", "12", "--csv", str(kc)]) == 0
    assert main(["grid", "--n", "4", "--mu", "1", "--parts", "3,2", "--grid-size", "12", "--csv", str(gc)]) == 0
    capsys.readouterr()
    assert len(_csv(kc)) == 145
    rows = _csv(gc)
    assert len(rows) == 13
    assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(8 * math.pi**2 / 3, rel=1e-10)


def test_atlas_and_bubble(capsys):
    code, env = run(capsys, "atlas", "--n", "5", "--max-degree", "6")
    assert code == 0 and env["payload"]["any_property_P"] is True
    code, env = run(capsys, "bubble", "--n", "3", "--mu", "2")
    assert code == 0
    assert env["payload"]["c_star"] == pytest.approx((3 / (8 * math.pi**2)) ** (1 / 6), rel=1e-12)
    assert env["payload"]["lift_max_deviation"] < 1e-12


def test_envelope_round_trip():
    env = dispatch(RunConfig("ledger", {"n": 5, "mu": "1"}))
    back = ResultEnvelope.from_json(env.to_json())
    assert back == env
    assert back.to_json() == env.to_json()


def test_deterministic_reruns(tmp_path):
    out = tmp_path / "run.json"
    argv = ["--deterministic", "--out", str(out), "solve", "--n", "3", "--mu", "2", "--parts", "2,2",
            "--count", "2", "--grid-size", "32"]
    assert main(argv) == 0
    first = ResultEnvelope.from_json(out.read_text()).stable_json()
    assert main(argv) == 0
    assert ResultEnvelope.from_json(out.read_text()).stable_json() == first
