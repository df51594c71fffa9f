"""Experiment configs, report serialization, and the CLI."""

import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from statvac import cli_reports as cli
from statvac.errors import ConfigInvalid


def test_default_configs_valid_for_all_kinds():
    for kind in cli.KINDS:
        cfg = cli.ExperimentConfig.default(kind)
        assert cfg.kind == kind
        round_trip = cli.ExperimentConfig.from_dict(cfg.to_dict())
        assert round_trip.config_hash() == cfg.config_hash()


def test_config_hash_is_deterministic_and_seed_sensitive():
    a = cli.ExperimentConfig.default("mass")
    b = cli.ExperimentConfig.default("mass")
    assert a.config_hash() == b.config_hash()
    d = a.to_dict()
    d["seed"] = 99
    c = cli.ExperimentConfig.from_dict(d)
    assert c.config_hash() != a.config_hash()


def test_unknown_top_level_key_rejected():
    d = cli.ExperimentConfig.default("mass").to_dict()
    d["surprise"] = 1
    with pytest.raises(ConfigInvalid):
        cli.ExperimentConfig.from_dict(d)


def test_unknown_params_key_rejected():
    d = cli.ExperimentConfig.default("mass").to_dict()
    d["params"]["surprise"] = 1
    with pytest.raises(ConfigInvalid):
        cli.ExperimentConfig.from_dict(d)


def test_bad_kind_rejected():
    d = cli.ExperimentConfig.default("mass").to_dict()
    d["kind"] = "bake-cake"
    with pytest.raises(ConfigInvalid):
        cli.ExperimentConfig.from_dict(d)


def test_bad_schema_rejected():
    d = cli.ExperimentConfig.default("mass").to_dict()
    d["schema"] = 2
    with pytest.raises(ConfigInvalid):
        cli.ExperimentConfig.from_dict(d)


def test_from_file_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigInvalid):
        cli.ExperimentConfig.from_file(path)


def test_check_record_line_format():
    rec = cli.CheckRecord("some-check", 1.5e-3, 1e-2, True)
    line = rec.line()
    assert "PASS" in line and "some-check" in line
    rec2 = cli.CheckRecord("other-check", 2.0, 1.0, False)
    assert "FAIL" in rec2.line()


def test_run_mass_experiment_and_save(tmp_path):
    cfg = cli.ExperimentConfig.default("mass")
    report = cli.run(cfg, out_dir=tmp_path)
    assert report.passed
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["experiment"] == "mass"
    assert data["config_hash"] == cfg.config_hash()
    with open(tmp_path / "checks.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and {"name", "value", "tolerance", "passed"} <= set(rows[0])


def test_cli_mass_exit_zero(tmp_path):
    runner = CliRunner()
    result = runner.invoke(cli.main, ["mass", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "PASS" in result.output


def test_cli_failing_check_exit_one(tmp_path):
    cfg = cli.ExperimentConfig.default("mass").to_dict()
    cfg["params"]["rel_tol"] = 1e-15
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    runner = CliRunner()
    result = runner.invoke(cli.main, ["mass", "--config", str(path)])
    assert result.exit_code == 1, result.output
    assert "FAIL" in result.output


def test_cli_invalid_config_exit_two(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"schema": 1, "kind": "mass",
                                "seed": 0, "bogus": True}))
    runner = CliRunner()
    result = runner.invoke(cli.main, ["mass", "--config", str(path)])
    assert result.exit_code == 2


def test_cli_seed_override(tmp_path):
    runner = CliRunner()
    result = runner.invoke(cli.main, ["mass", "--seed", "5",
                                      "--out", str(tmp_path)])
    assert result.exit_code == 0
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["config"]["seed"] == 5


def test_cli_has_all_subcommands():
    runner = CliRunner()
    result = runner.invoke(cli.main, ["--help"])
    for kind in cli.KINDS:
        assert kind in result.output
