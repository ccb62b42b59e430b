"""Tests for the command line."""

import pytest
import yaml

from wpcn.cli import build_parser, main
from wpcn.config import parse_scenario


def test_dump_config(capsys):
    assert main(["dump-config"]) == 0
    scenario = parse_scenario(yaml.safe_load(capsys.readouterr().out))
    assert scenario.n_ps == 3


def test_dump_config_of_file(capsys, tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("n_ap: 5\n", encoding="utf-8")
    assert main(["dump-config", "-c", str(path)]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["n_ap"] == 5


def test_missing_config_returns_error_code(capsys):
    assert main(["dump-config", "-c", "nowhere.yaml"]) == 2
    assert "ConfigError" in capsys.readouterr().out


def test_verify_missing_file(capsys, tmp_path):
    assert main(["verify", str(tmp_path / "alloc.json")]) == 2


def test_sweep_values_are_parsed():
    args = build_parser().parse_args(["sweep", "--param", "qos.r_req", "--values", "4, 6,8"])
    assert args.values == [4.0, 6.0, 8.0]
    with pytest.raises(SystemExit):
        build_parser().parse_args(["sweep", "--param", "qos.r_req", "--values", "four"])


def test_unknown_scheme_is_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["solve", "--scheme", "greedy"])


def test_montecarlo_writes_outputs(tmp_path, small_scenario, monkeypatch, capsys):
    import wpcn.pipelines.harness as harness
    from test_harness import fake_run_scheme

    monkeypatch.setattr(harness, "run_scheme", fake_run_scheme)
    config = tmp_path / "small.yaml"
    config.write_text(yaml.safe_dump(small_scenario.model_dump(mode="json")), encoding="utf-8")
    out = tmp_path / "mc.csv"
    assert main(["montecarlo", "-c", str(config), "-n", "1", "-o", str(out), "-q"]) == 0
    assert out.exists()
    assert (tmp_path / "mc_breakdown.csv").exists()
