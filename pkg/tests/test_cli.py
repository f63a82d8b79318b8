import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from mfnash.cli import main

ROOT = Path(__file__).resolve().parents[1]
S1 = ROOT / "configs" / "s1.yaml"


def write_config(tmp_path, name="game.yaml", **changes):
    data = yaml.safe_load(S1.read_text())
    for key, value in changes.items():
        section, _, field = key.partition(".")
        if section in ("coefficients", "terminal"):
            data["game"][section][field] = value
        else:
            data.setdefault(section, {})[field] = value
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def only_dir(root, command):
    (run,) = [p for p in Path(root).iterdir() if p.is_dir()]
    return run / command


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_validate(capsys, tmp_path):
    assert main(["validate", str(S1)]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["validate", str(write_config(tmp_path, **{"coefficients.b2": 2.0}))]) == 1
    assert "A3" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [], ["bogus", "x.yaml"], ["solve"], ["simulate", "CFG", "--paths", "0"],
    ["simulate", "CFG", "--seed", "-3"], ["solve", "CFG", "--threads", "zero"],
    ["solve", "missing.yaml"],
])
def test_usage_errors(argv, tmp_path):
    argv = [str(S1) if a == "CFG" else str(tmp_path / a) if a == "missing.yaml" else a for a in argv]
    assert main(argv) == 2


def test_malformed_yaml(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("game: {horizon: [\n")
    assert main(["solve", str(bad), "--out", str(tmp_path)]) == 2


def test_solve_outputs(tmp_path):
    assert main(["solve", str(S1), "--out", str(tmp_path), "--steps", "100"]) == 0
    run = only_dir(tmp_path, "solve")
    rows = read_csv(run / "riccati.csv")
    assert rows[0] == ["t", "alpha1", "alpha2", "tau1", "tau2", "delta1", "delta2", "ex_mean"]
    assert len(rows) == 102
    gains = read_csv(run / "gains.csv")
    assert gains[-1][:3] == ["1.0", "-1.0", "-0.5"]
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["seed"] == 20240601 and manifest["config"]["solve"]["n_steps"] == 100
    assert set(manifest["versions"]) == {"mfnash", "numpy", "scipy", "python"}
    assert run.parent.name.startswith(manifest["config_hash"])


def test_zero_cost_game_has_zero_gains(tmp_path):
    zero = {f"coefficients.{n}": 0.0 for n in ("g1", "g2", "gbar1", "gbar2")}
    zero.update({f"terminal.{n}": 0.0 for n in ("h1", "h2")})
    cfg = write_config(tmp_path, **zero)
    assert main(["solve", str(cfg), "--out", str(tmp_path / "o"), "--steps", "20"]) == 0
    rows = read_csv(only_dir(tmp_path / "o", "solve") / "gains.csv")[1:]
    assert len(rows) == 21 and all(float(v) == 0.0 for r in rows for v in r[1:])


def test_simulate_outputs_and_env_root(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MFNASH_OUT", str(tmp_path))
    assert main(["simulate", str(S1), "--paths", "300", "--steps", "64", "--seed", "5"]) == 0
    (run,) = list(tmp_path.iterdir())
    assert run.name.endswith("-s5")
    summary = json.loads((run / "simulate" / "cost.json").read_text())
    assert summary["n_paths"] == 300 and summary["seed"] == 5
    assert abs(summary["j1"] - summary["exact_j1"]) < 4 * summary["se1"]
    rows = read_csv(run / "simulate" / "paths.csv")
    # 20 paths, nodes 0, 8, ..., 64
    assert len(rows) == 1 + 20 * 9
    assert json.loads(capsys.readouterr().out)["j2"] == summary["j2"]


def test_threads_and_reruns_are_byte_identical(tmp_path):
    outs = []
    for label, threads in (("a", "1"), ("b", "3"), ("c", "1")):
        root = tmp_path / label
        assert main(["simulate", str(S1), "--paths", "1200", "--steps", "32", "--out", str(root),
                     "--threads", threads]) == 0
        run = only_dir(root, "simulate")
        outs.append(((run / "paths.csv").read_bytes(), (run / "cost.json").read_bytes()))
    assert outs[0] == outs[1] == outs[2]


def test_verify_nash(tmp_path, capsys):
    # the discrete first-order condition is off by O(dt), so avoid very coarse grids
    args = ["verify-nash", str(S1), "--paths", "1000", "--steps", "256", "--out", str(tmp_path)]
    assert main(args) == 0
    run = only_dir(tmp_path, "verify-nash")
    assert len(read_csv(run / "nash.csv")) == 15
    assert "overall: PASS" in (run / "nash_summary.txt").read_text()
    assert main(args + ["--gain-scale", "1.5"]) == 1
    assert "overall: FAIL" in capsys.readouterr().out


def test_verify_nash_structural_and_convexity_failures(tmp_path, capsys):
    a3 = write_config(tmp_path, "a3.yaml", **{"coefficients.b2": 2.0})
    assert main(["verify-nash", str(a3), "--paths", "100", "--steps", "8", "--out", str(tmp_path)]) == 1
    assert "A3" in capsys.readouterr().out
    neg = write_config(tmp_path, "neg.yaml", **{"coefficients.g1": -1.0})
    assert main(["verify-nash", str(neg), "--paths", "200", "--steps", "16", "--out", str(tmp_path)]) == 1
    assert "convexity: FAIL" in capsys.readouterr().out
    assert main(["verify-nash", str(S1), "--paths", "101", "--out", str(tmp_path)]) == 2


def test_fbsde_check(tmp_path, capsys):
    args = ["fbsde-check", str(S1), "--paths", "2000", "--steps", "32", "--out", str(tmp_path)]
    assert main(args) == 0
    run = only_dir(tmp_path, "fbsde-check")
    res = json.loads((run / "residuals.json").read_text())
    assert res["pass"] and res["iterations"] <= 30
    assert len(read_csv(run / "qhat.csv")) == 34
    assert main(args + ["--picard", "1"]) == 3
    assert "solver fault" in capsys.readouterr().err
    assert main(["fbsde-check", str(S1), "--paths", "101", "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "mfnash", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("mfnash ")
