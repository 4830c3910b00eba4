import csv
import json

import pytest

from tonelli_lab import cli, runner
from tonelli_lab.config import ExperimentConfig, apply_overrides, load_schema, validate
from tonelli_lab.errors import ConfigError, HypothesisViolated

FLOW = {"task": "flow", "hamiltonian": {"name": "pendulum"},
        "params": {"x": [0.1], "p": [0.7], "t": 1.0}}


def test_schemas_load():
    assert load_schema("config")["type"] == "object"
    assert "payload" in load_schema("report")["properties"]


def test_valid_config_round_trips():
    cfg = ExperimentConfig.from_dict(FLOW)
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.hash() == cfg.hash()


@pytest.mark.parametrize("bad", [
    {**FLOW, "extra": 1},
    {**FLOW, "task": "nonsense"},
    {**FLOW, "hamiltonian": {"name": "pendulum", "n": 7}},
    {**FLOW, "params": {"x": [0.1], "p": [0.7], "t": 1.0, "oops": 2}},
])
def test_invalid_configs_are_rejected(bad):
    with pytest.raises(ConfigError):
        validate(bad)


def test_dotted_overrides():
    raw = apply_overrides(FLOW, {"params.t": 2.5, "integrator.h": 1e-3})
    assert raw["params"]["t"] == 2.5 and raw["integrator"]["h"] == 1e-3
    assert FLOW["params"]["t"] == 1.0


def test_hash_ignores_output_but_not_params():
    a = ExperimentConfig.from_dict(FLOW)
    assert a.with_overrides({"output": "x.json"}).hash() == a.hash()
    assert a.with_overrides({"params.t": 2.0}).hash() != a.hash()


def test_broken_json_reports_position(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"task": "flow",\n  "params": }')
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.load(path)
    assert "line 2" in str(info.value)


def test_runs_are_deterministic():
    cfg = ExperimentConfig.from_dict({"task": "torus-periodic", "hamiltonian": {"name": "shear"},
                                      "params": {"T": 1.0, "r": [1], "grid": 8}})
    a, b = runner.run(cfg), runner.run(cfg)
    assert a.payload_json() == b.payload_json()
    assert a.passed


def test_compare_semantics():
    cfg = ExperimentConfig.from_dict(FLOW)
    rep = runner.run(cfg).to_dict()
    assert runner.compare(rep, rep) == []
    assert runner.compare(rep, rep, {"*": 0}) != []
    other = json.loads(json.dumps(rep))
    other["payload"]["p"][0] += 1e-9
    assert runner.compare(rep, other)
    assert runner.compare(rep, other, {"p*": 1e-6}) == []
    with pytest.raises(ConfigError):
        runner.compare(rep, {**other, "task": "kam"})


def test_cli_flow_writes_report_and_csv(tmp_path):
    out, table = tmp_path / "r.json", tmp_path / "r.csv"
    code = cli.main(["flow", "--hamiltonian", "pendulum", "--x", "0.1", "--p", "0.7", "--t", "1",
                     "--output", str(out), "--csv", str(table), "--quiet"])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["task"] == "flow" and rep["passed"] and len(rep["config_hash"]) == 64
    rows = list(csv.reader(table.open()))
    assert rows[0] == ["x1", "p1"] and len(rows) == 2


def test_cli_compare_exit_codes(tmp_path):
    out = tmp_path / "r.json"
    cli.main(["flow", "--x", "0.1", "--p", "0.7", "--t", "1", "--output", str(out), "--quiet"])
    assert cli.main(["compare", str(out), str(out)]) == 0
    assert cli.main(["compare", str(out), str(out), "--tol", "*=0"]) == cli.EXIT_ASSERTION


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["flow", "--set", "params.x=[0.1]", "--set", "params.bogus=1"]) == 1
    assert cli.main(["flow", "--grid", "abc"]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_numeric_failure_exit_code():
    assert cli.main(["torus-periodic", "--hamiltonian", "pendulum", "--T", "1", "--r", "0",
                     "--grid", "8", "--quiet"]) == 2


def test_cli_hypothesis_exit_code(monkeypatch):
    def boom(cfg, H, spec):
        raise HypothesisViolated("conjugate points on the base torus")

    monkeypatch.setitem(runner.TASKS, "flow", boom)
    assert cli.main(["flow", "--x", "0", "--p", "0", "--t", "1", "--quiet"]) == 3


def test_cli_assertion_exit_code(monkeypatch):
    def failing(cfg, H, spec):
        return {"x": 0.0}, [runner._assert("always", 1.0, 0.0, False)]

    monkeypatch.setitem(runner.TASKS, "flow", failing)
    assert cli.main(["flow", "--x", "0", "--p", "0", "--t", "1", "--quiet"]) == cli.EXIT_ASSERTION


def test_class_ranges_parse():
    assert cli._classes("-1:1:3") == [[-1.0], [0.0], [1.0]]
    assert cli._classes("0.1,0.2;0.3,0.4") == [[0.1, 0.2], [0.3, 0.4]]
