"""Config loading, extrapolation utilities, task dispatch, CLI exit codes."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gaugeband.cli import main
from gaugeband.harness import (ConfigError, config_hash, fit_power, load_config,
                               richardson, run_experiment, write_report)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TWO_PI = 6.283185307179586

MODEL_A_RAW = {
    "lattice": [[TWO_PI]],
    "v": [{"m": [0], "re": 1.0}, {"m": [1], "re": -0.5}],
    "w3": [{"m": [0], "re": 2.0}],
}

MODEL_B_RAW = {
    "lattice": [[TWO_PI]],
    "v": [{"m": [0], "re": 2.0}, {"m": [1], "re": -1.0}],
    "w1": [{"m": [1], "im": -0.5}],
    "w3": [{"m": [0], "re": 2.0}, {"m": [1], "re": 0.5}],
}


def test_load_config_defaults_1d():
    cfg = load_config(dict(MODEL_A_RAW))
    assert (cfg.M, cfg.P, cfg.K) == (64, 256, 33)
    assert cfg.hs == [0.5]
    assert cfg.name == "unnamed"
    assert cfg.dim == 1


def test_load_config_defaults_2d():
    cfg = load_config({"lattice": [[TWO_PI, 0.0], [0.0, TWO_PI]],
                       "w3": [{"m": [0, 0], "re": 1.0}]})
    assert (cfg.M, cfg.P, cfg.K) == (16, 64, 9)
    assert cfg.dim == 2


def test_load_config_overrides_and_flat_lattice():
    raw = dict(MODEL_A_RAW)
    raw["lattice"] = [TWO_PI]
    raw.update({"M": 32, "K": 9, "h": 0.4, "name": "flat"})
    cfg = load_config(raw)
    assert (cfg.M, cfg.K) == (32, 9)
    assert cfg.hs == [0.4]
    assert cfg.name == "flat"
    assert cfg.pot.lattice.basis.shape == (1, 1)


def test_load_config_from_file_uses_stem_fallback():
    cfg = load_config(str(CONFIGS / "pa.json"))
    assert cfg.name == "cosine-decoupled"
    assert len(cfg.hs) == 6
    assert cfg.pot.v.coeffs[(-1,)] == pytest.approx(-0.5)


@pytest.mark.parametrize("raw,match", [
    ({}, "lattice"),
    ({"lattice": [1.0, 2.0, 3.0]}, "not square"),
    ({"lattice": [[1.0, 2.0], [2.0, 4.0]]}, "singular"),
    ({"lattice": [[TWO_PI]], "v": [{"m": [1, 0], "re": 1.0}]}, "not 1 integers"),
    ({"lattice": [[TWO_PI]], "v": [{"re": 1.0}]}, "'m' index"),
    ({"lattice": [[TWO_PI]], "h": [0.5, -0.1]}, "positive"),
    ({"lattice": [[TWO_PI]], "M": 0}, "positive integer"),
    ({"lattice": np.eye(3).tolist()}, "1d and 2d"),
    ({"lattice": [[TWO_PI]],
      "v": [{"m": [1], "re": 1.0}, {"m": [-1], "re": 0.5}]}, "conflicting"),
])
def test_load_config_rejects_bad_input(raw, match):
    with pytest.raises(ConfigError, match=match):
        load_config(raw)


def test_richardson_linear_sequence():
    val = richardson([0.4, 0.2, 0.1], [5.0 + 2.0 * h for h in (0.4, 0.2, 0.1)])
    assert abs(val - 5.0) < 1e-12


def test_richardson_second_order():
    hs = [0.4, 0.2, 0.1, 0.05]
    ys = [3.0 + h ** 2 for h in hs]
    assert abs(richardson(hs, ys, power=2) - 3.0) < 1e-12
    assert abs(richardson(hs, ys, power=1) - 3.0) < 1e-12


def test_richardson_rejects_bad_nodes():
    with pytest.raises(ValueError, match="length at least 2"):
        richardson([0.4], [1.0])
    with pytest.raises(ValueError, match="distinct"):
        richardson([0.2, 0.2], [1.0, 1.1])
    with pytest.raises(ValueError, match="length"):
        richardson([0.4, 0.2], [1.0, 1.1, 1.2])


def test_fit_power():
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    slope, coef = fit_power(xs, 3.0 * xs ** 2)
    assert abs(slope - 2.0) < 1e-10
    assert abs(coef - 3.0) < 1e-10
    with pytest.raises(ValueError, match="positive"):
        fit_power(xs, [1.0, -1.0, 1.0, 1.0])


def test_config_hash_canonical():
    a = {"lattice": [[1.0]], "M": 32, "v": []}
    b = {"v": [], "M": 32, "lattice": [[1.0]]}
    assert config_hash(a) == config_hash(b)
    c = dict(a, M=64)
    assert config_hash(c) != config_hash(a)


def test_write_report_atomic(tmp_path):
    target = tmp_path / "report.json"
    write_report({"ok": True, "x": [1, 2]}, str(target))
    assert json.loads(target.read_text()) == {"ok": True, "x": [1, 2]}
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []


def test_run_validate_model_a():
    rep = run_experiment("validate", load_config(dict(MODEL_A_RAW)))
    assert rep["ok"]
    assert rep["task"] == "validate"
    assert rep["data"]["well"]["E0"] == pytest.approx(-2.0)
    assert rep["data"]["well"]["tau"][0] == pytest.approx(1.0 / np.sqrt(2.0))
    json.dumps(rep)


def test_run_reduce_model_b():
    rep = run_experiment("reduce", load_config(dict(MODEL_B_RAW)))
    assert rep["ok"]
    data = rep["data"]
    assert data["branch"] == "general"
    assert abs(data["r_well"] - 1.0 / 36.0) < 1e-9
    assert abs(data["a_diag_mean"][0]) < 1e-12
    assert 0.1 < data["coupling_max"] < 1.0
    assert data["residual_max"] < 1e-10
    json.dumps(rep)


def test_run_gauge_check_model_b():
    raw = dict(MODEL_B_RAW, M=32, K=9, h=[0.5])
    rep = run_experiment("gauge-check", load_config(raw))
    assert rep["ok"]
    assert rep["data"]["max_mismatch"] < 1e-10


def test_run_agmon_2d():
    raw = {"lattice": [[TWO_PI, 0.0], [0.0, TWO_PI]],
           "v": [{"m": [0, 0], "re": 2.0}, {"m": [1, 0], "re": -0.5},
                 {"m": [0, 1], "re": -0.5}],
           "w3": [{"m": [0, 0], "re": 1.0}], "Q": 24}
    rep = run_experiment("agmon", load_config(raw))
    assert rep["ok"]
    assert rep["data"]["multiplicity"] == 4
    assert abs(rep["data"]["S0"] / (4.0 * np.sqrt(2.0)) - 1.0) < 0.05
    assert sorted(rep["data"]["directions"]) == [[-1, 0], [0, -1], [0, 1], [1, 0]]


def test_run_unknown_task_raises():
    with pytest.raises(ConfigError, match="unknown task"):
        run_experiment("frobnicate", load_config(dict(MODEL_A_RAW)))


def test_run_widths_task_requires_1d():
    raw = {"lattice": [[TWO_PI, 0.0], [0.0, TWO_PI]],
           "w3": [{"m": [0, 0], "re": 1.0}]}
    with pytest.raises(ConfigError, match="1d lattice"):
        run_experiment("widths", load_config(raw))


def test_cli_validate_writes_report(tmp_path):
    out = tmp_path / "rep.json"
    code = main(["validate", str(CONFIGS / "pa.json"), "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["ok"] and rep["name"] == "cosine-decoupled"


def test_cli_config_errors_exit_2(tmp_path):
    assert main(["validate", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", str(bad)]) == 2
    two_d = tmp_path / "2d.json"
    two_d.write_text(json.dumps({"lattice": [[TWO_PI, 0.0], [0.0, TWO_PI]],
                                 "w3": [{"m": [0, 0], "re": 1.0}]}))
    assert main(["wkb", str(two_d)]) == 2


def test_cli_failed_run_exits_1(tmp_path, capsys):
    raw = dict(MODEL_A_RAW, h=[0.5])       # one width cannot support a fit
    cfg = tmp_path / "one_h.json"
    cfg.write_text(json.dumps(raw))
    assert main(["widths", str(cfg)]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert not rep["ok"]
    assert "fit" in rep["data"] and "error" in rep["data"]["fit"]


def test_cli_subprocess_entry():
    proc = subprocess.run(
        [sys.executable, "-m", "gaugeband.cli", "agmon", str(CONFIGS / "pa.json")],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    rep = json.loads(proc.stdout)
    assert rep["data"]["S0"] == pytest.approx(4.0 * np.sqrt(2.0), abs=1e-9)
