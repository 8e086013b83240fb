import copy
import json
import subprocess
import sys

import numpy as np
import pytest

from shsfem import cli, config
from shsfem.presets import PRESETS, get_preset, list_presets

SMALL = {
    "task": "convergence",
    "title": "small",
    "domain": [[0.0, 10.0], [-1.0, 1.0]],
    "material": {"mode": "plane_stress", "nu": [0.25]},
    "field": {"kind": "explicit", "variables": [{"dist": "uniform", "a": 500, "b": 1500}], "E": "y1",
              "e_bounds": [500, 1500]},
    "loads": {"g": {"right": ["-2*E*x2", "0"]}},
    "exact": {"kind": "bending"},
    "mesh": {"families": ["rectangular"], "levels": [0, 1]},
    "basis": {"kind": "p_version", "degrees": [1]},
}


def read_rows(path):
    lines = (path / "table.csv").read_text().strip().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def test_seven_presets_listed(capsys):
    names = [n for n, _ in list_presets()]
    assert len(names) == 7 and len(PRESETS) == 7
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert all(n in out for n in names)


@pytest.mark.parametrize("name", list(PRESETS))
def test_presets_validate(name):
    cfg = get_preset(name)
    assert config.validate(cfg) is cfg
    if cfg["task"] == "convergence":
        for spec in config.expand_cases(cfg):
            case = config.build_case(cfg, spec)
            assert case.meshes and case.basis.M >= 1


def test_get_preset_returns_copy():
    a = get_preset("example1_pxh")
    a["mesh"]["levels"] = [9]
    assert get_preset("example1_pxh")["mesh"]["levels"] == [0, 1, 2, 3]
    with pytest.raises(KeyError):
        get_preset("nope")


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert cli.run_config(copy.deepcopy(SMALL), out) == 0
    rows = read_rows(out)
    assert [r["mesh"] for r in rows] == ["5x1", "10x2"]
    assert float(rows[0]["e_u"]) == pytest.approx(0.0727, abs=5e-5)
    assert float(rows[1]["ratio_u"]) == pytest.approx(2.0, abs=0.01)
    meta = json.loads((out / "run.json").read_text())
    assert meta["status"] == "ok" and meta["config"] == SMALL
    assert set(meta["versions"]) >= {"shsfem", "numpy", "scipy", "python"}
    assert len(meta["wall_times"]) == 2 and meta["quadrature"][0]["error_stochastic"] == 20
    assert "| 0.0727 |" in (out / "table.md").read_text()


def test_run_json_round_trip_is_bitwise(tmp_path):
    first = tmp_path / "first"
    assert cli.run_config(copy.deepcopy(SMALL), first) == 0
    second = tmp_path / "second"
    assert cli.main(["run", str(first / "run.json"), "--out", str(second)]) == 0
    assert (first / "table.csv").read_bytes() == (second / "table.csv").read_bytes()


def test_empty_study_succeeds(tmp_path):
    cfg = dict(copy.deepcopy(SMALL), study=[])
    assert cli.run_config(cfg, tmp_path) == 0
    assert read_rows(tmp_path) == []
    assert (tmp_path / "table.md").read_text().strip().endswith("_no results_")


@pytest.mark.parametrize("patch", [
    {"material": {"mode": "plane_strain", "nu": [0.5]}},
    {"material": {"mode": "plane_strain", "nu": [0.25, 0.6]}},
    {"field": {"kind": "explicit", "variables": [{"dist": "uniform", "a": 500, "b": 1500}], "E": "y1",
               "e_bounds": [0, 1500]}},
    {"field": {"kind": "explicit", "variables": [{"dist": "uniform", "a": 1500, "b": 500}], "E": "y1"}},
    {"field": {"kind": "explicit", "variables": [{"dist": "uniform", "a": 500, "b": 1500}]}},
    {"field": {"kind": "explicit", "variables": [{"dist": "uniform", "a": 500, "b": 1500}], "E": "y2"}},
    {"loads": {"g": {"right": ["-2*E*x2", "__import__('os')"]}}},
    {"scheme": "q9"},
    {"unknown_key": 1},
    {"mesh": {"families": ["irregular"], "levels": [0], "base": [4, 1]}},
])
def test_bad_configs_exit_2(tmp_path, patch, capsys):
    cfg = dict(copy.deepcopy(SMALL), **patch)
    assert cli.run_config(cfg, tmp_path / "out") == 2
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "out" / "table.csv").exists()


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["preset", "nope"]) == 2
    err = capsys.readouterr().err
    assert "invalid JSON" in err and "unknown preset" in err


def test_solver_failure_exit_3(tmp_path, capsys):
    cfg = config.merged(SMALL, {"field": {"E": "y1 - 1000", "e_bounds": [1, None]}})
    assert cli.run_config(cfg, tmp_path) == 3
    meta = json.loads((tmp_path / "run.json").read_text())
    assert meta["status"] == "error" and "modulus" in meta["error"]
    assert (tmp_path / "table.csv").read_text().startswith("case,")
    assert "solver error" in capsys.readouterr().err


def test_expression_exact_solution_matches_builtin(tmp_path):
    cfg = dict(copy.deepcopy(SMALL), exact={"u": ["-2*x1*x2", "x1**2 + 0.25*(x2**2 - 1)"]},
               mesh={"levels": [0]})
    assert cli.run_config(cfg, tmp_path) == 0
    row = read_rows(tmp_path)[0]
    assert float(row["e_u"]) == pytest.approx(0.0727, abs=5e-5)
    assert float(row["e_sigma"]) < 1e-9


def test_kl_field_with_rigid_reference(tmp_path):
    cfg = {
        "task": "convergence",
        "field": {"kind": "kl", "variables": [{"dist": "uniform", "a": -1, "b": 1}] * 2, "mean": "10",
                  "kernel": {"kind": "exponential", "variance": 1.0, "length": 5.0}, "n_terms": 2,
                  "e_bounds": [1, 20]},
        "exact": {"u": ["0.01 - 0.001*x2", "0.001*x1"], "sigma": ["0", "0", "0"]},
        "mesh": {"levels": [0]},
        "basis": {"kind": "k_version", "degrees": [1], "partitions": 2},
    }
    assert cli.run_config(cfg, tmp_path) == 0
    row = read_rows(tmp_path)[0]
    assert float(row["e_u"]) < 1e-10 and float(row["e_sigma"]) < 1e-10
    assert int(row["dofs"]) == 16 * 20


def test_stability_task_wiring(tmp_path):
    cfg = {"task": "stability", "stability": {"lambdas": [1, 100], "mesh": [2, 2], "degree": 1}}
    assert cli.run_config(cfg, tmp_path) == 0
    lines = (tmp_path / "table.csv").read_text().strip().splitlines()
    assert lines[0] == "lambda,nu,alpha,beta,kernel_dim" and len(lines) == 3
    meta = json.loads((tmp_path / "run.json").read_text())
    assert meta["beta_ratio"] == pytest.approx(1.0, abs=1e-8)
    assert meta["patch_error"] < 1e-11


def test_kl_preset(tmp_path):
    assert cli.main(["preset", "kl_diagnostics", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "run.json").read_text())
    assert meta["trace_residual"] <= 1e-6
    assert meta["truncation_identity_residual"] <= 1e-12
    assert meta["log_error_vs_sqrt_n_slope"] < 0
    lines = (tmp_path / "table.csv").read_text().strip().splitlines()
    vals = [float(ln.split(",")[1]) for ln in lines[1:]]
    assert len(vals) == 10 and np.all(np.diff(vals) <= 0)


def test_preset_show(capsys):
    assert cli.main(["preset", "example2_locking", "--show"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown == get_preset("example2_locking")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "shsfem.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("shsfem ")
    proc = subprocess.run([sys.executable, "-m", "shsfem.cli", "run", str(tmp_path / "none.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
