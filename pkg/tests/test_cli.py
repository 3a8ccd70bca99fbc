import csv
import json
import subprocess
import sys
from importlib import resources

import pytest

from thrusthzd.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, SWEEP_COLUMNS, RunConfig, main
from thrusthzd.errors import ConfigError


def _run(tmp_path, cmd, cfg=None, name="run.json", extra=()):
    args = [cmd, "--out", str(tmp_path / "out")]
    if cfg is not None:
        tmp_path.mkdir(parents=True, exist_ok=True)
        (tmp_path / name).write_text(json.dumps(cfg))
        args += ["--config", str(tmp_path / name)]
    return main(args + list(extra))


@pytest.mark.parametrize("cfg", [{"bogus": 1}, {"sweep": {"values": ["x"]}},
                                 {"sweep": {"values": [float("nan")]}}, {"gait": "missing.json"},
                                 {"model": {"leg_mass": -1}}, {"seed": -3}])
def test_config_errors_exit_64(tmp_path, cfg):
    assert _run(tmp_path, "sweep", cfg) == EXIT_CONFIG


def test_missing_config_and_bad_args(tmp_path, capsys):
    assert main(["check", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    assert main(["fly"]) == EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["check", "--config", str(tmp_path / "bad.json")]) == EXIT_CONFIG


def test_threads_env_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("HZD_THREADS", "zero")
    assert _run(tmp_path, "sweep", {"sweep": {"values": []}}) == EXIT_CONFIG
    monkeypatch.setenv("HZD_THREADS", "0")
    assert _run(tmp_path, "sweep", {"sweep": {"values": []}}) == EXIT_CONFIG


def test_infeasible_design_exits_2(tmp_path, capsys):
    assert _run(tmp_path, "design-gait", {"design": {"step_length": 2.5}}) == EXIT_DOMAIN
    reason = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert reason["condition"] == "step_length"


def test_design_gait_matches_fixture(tmp_path):
    assert _run(tmp_path, "design-gait") == EXIT_OK
    shipped = resources.files("thrusthzd").joinpath("gaits/nominal.json").read_text()
    assert (tmp_path / "out" / "nominal.json").read_text() == shipped
    rep = json.loads((tmp_path / "out" / "design_report.json").read_text())
    assert rep["impact"]["feasible"]


def test_empty_sweep_writes_header(tmp_path):
    assert _run(tmp_path, "sweep", {"sweep": {"values": []}}) == EXIT_OK
    rows = list(csv.reader((tmp_path / "out" / "sweep.csv").open()))
    assert rows == [SWEEP_COLUMNS]


def test_sweep_is_deterministic_and_thread_invariant(tmp_path, monkeypatch):
    cfg = {"sweep": {"values": [0.0, -20.0, -40.0]}}
    assert _run(tmp_path / "a", "sweep", cfg) == EXIT_OK
    assert _run(tmp_path / "b", "sweep", cfg) == EXIT_OK
    monkeypatch.setenv("HZD_THREADS", "3")
    assert _run(tmp_path / "c", "sweep", cfg) == EXIT_OK
    outs = [(tmp_path / d / "out" / "sweep.csv").read_bytes() for d in "abc"]
    assert outs[0] == outs[1] == outs[2]
    rows = list(csv.DictReader((tmp_path / "a" / "out" / "sweep.csv").open()))
    assert [float(v) for v in dict.fromkeys(r["sweep_value"] for r in rows)] == [0.0, -20.0, -40.0]


def test_fit_forces_prints_residual(tmp_path, capsys):
    assert _run(tmp_path, "fit-forces") == EXIT_OK
    printed = capsys.readouterr().out
    fit = json.loads((tmp_path / "out" / "force_fit.json").read_text())
    assert f"max_fit_residual={fit['max_fit_residual']!r}" in printed
    assert fit["max_fit_residual"] < 0.1


def test_check_verdicts(tmp_path, capsys):
    assert _run(tmp_path, "check", {"thrust": {"type": "constant", "value": 0.0}}) == EXIT_OK
    assert json.loads((tmp_path / "out" / "check_report.json").read_text())["feasible"]
    cfg = {"thrust": {"type": "constant", "value": 300.0},
           "check": {"zeta_star": 2260.841505517012}}
    assert _run(tmp_path, "check", cfg) == EXIT_DOMAIN
    rep = json.loads((tmp_path / "out" / "check_report.json").read_text())
    assert not rep["feasible"] and rep["binding"] == "vertical_force"


def test_shape_k_zero_is_nominal(tmp_path):
    cfg = {"shape": {"k": [0.0, 20.0], "full_order": False}}
    assert _run(tmp_path, "shape", cfg) == EXIT_OK
    members = json.loads((tmp_path / "out" / "schedules.json").read_text())
    dev = [m["max_deviation"] for m in members["members"]]
    assert dev[0] == pytest.approx(0.0, abs=1e-9) and dev[1] > 0


def test_simulate_outputs(tmp_path):
    cfg = {"simulate": {"steps": 2}, "thrust": {"type": "constant", "value": -10.0}}
    assert _run(tmp_path, "simulate", cfg) == EXIT_OK
    out = tmp_path / "out"
    lines = (out / "impacts.jsonl").read_text().splitlines()
    assert len(lines) == 2 and all("friction_ratio" in json.loads(l) for l in lines)
    header = next(csv.reader((out / "orbit.csv").open()))
    assert header[:6] == ["step", "t", "alpha", "alpha_dot", "zeta", "sigma_N"]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "thrusthzd", "check", "--config",
                        str(tmp_path / "none.json")], capture_output=True, text=True)
    assert r.returncode == EXIT_CONFIG and "ConfigError" in r.stderr


def test_runconfig_validation(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict([])
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"check": {"fit": "absent.json"}}, base=tmp_path)
    cfg = RunConfig.from_dict({"seed": "42", "sweep": {"values": [1, 2]}})
    assert cfg.seed == 42 and cfg.sweep["values"] == [1.0, 2.0]
