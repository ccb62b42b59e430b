"""Tests for scenario loading, unit conversion and sweep paths."""

from pathlib import Path

import pytest

from wpcn.config import (
    SWEEP_ALIASES, ScenarioFile, apply_sweep, dump_scenario, load_scenario, parse_scenario, sweepable_params,
)
from wpcn.errors import ConfigError
from wpcn.utils.model import SystemConfig

CONFIGS = Path(__file__).parent / "configs"


def test_defaults_match_system_config():
    cfg = ScenarioFile().to_system_config()
    ref = SystemConfig()
    assert cfg.n_ps == ref.n_ps and cfg.n_irs == ref.n_irs
    assert cfg.p_max_ps == pytest.approx(1.0)
    assert cfg.sigma_ir2 == pytest.approx(ref.sigma_ir2, rel=1e-9)
    assert cfg.rho_ap == pytest.approx(1 / 0.3)
    assert cfg.p_c_ps == pytest.approx(50e-6)
    assert cfg.eh.m_sat == pytest.approx(0.024)
    assert cfg.qos.r_req == (4.0, 4.0)


def test_single_rate_is_broadcast():
    scenario = parse_scenario({"n_irs": 3, "qos": {"r_req": [5.0]}})
    assert scenario.qos.r_req == [5.0, 5.0, 5.0]


def test_rate_count_mismatch():
    with pytest.raises(ConfigError):
        parse_scenario({"n_irs": 3, "qos": {"r_req": [5.0, 5.0]}})


def test_unknown_field_is_rejected():
    with pytest.raises(ConfigError):
        parse_scenario({"n_antenas": 4})
    with pytest.raises(ConfigError):
        parse_scenario({"solver": {"distortion_encoding": "exact"}})
    with pytest.raises(ConfigError):
        parse_scenario({"experiment": {"schemes": ["greedy"]}})


def test_physical_checks_surface_as_config_errors():
    scenario = parse_scenario({"n_ps": 1, "n_ap": 1, "n_ev": 3})
    with pytest.raises(ConfigError):
        scenario.to_system_config()
    with pytest.raises(ConfigError):
        parse_scenario({"topology": {"ir_placement": "grid"}}).to_topology()


def test_missing_file():
    with pytest.raises(ConfigError):
        load_scenario("does/not/exist.yaml")


def test_no_path_gives_defaults():
    assert load_scenario() == ScenarioFile()


def test_dump_and_parse(tmp_path):
    scenario = parse_scenario({"n_ap": 4, "qos": {"r_req": [3.0, 3.5], "r_tol": 0.2}})
    path = tmp_path / "scenario.yaml"
    path.write_text(dump_scenario(scenario), encoding="utf-8")
    assert load_scenario(path) == scenario


def test_non_mapping_file(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_json_is_read(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text('{"n_ps": 4, "e_res_j": 0.5}', encoding="utf-8")
    scenario = load_scenario(path)
    assert scenario.n_ps == 4
    assert scenario.to_system_config().e_res == 0.5


def test_shipped_configs_load():
    desk = load_scenario(CONFIGS / "desk.yaml")
    assert desk.topology.pathloss_reference == "unit"
    assert len(desk.experiment.schemes) == 5
    desk.to_system_config()
    desk.to_topology()
    load_scenario(CONFIGS / "default.yaml").to_system_config()


# =============================================================================
# SWEEPS
# =============================================================================

def test_sweepable_params():
    names = sweepable_params()
    assert set(SWEEP_ALIASES) <= set(names)
    assert {"qos.r_req", "hwi.k1", "e_res_j", "topology.d_ap_ir", "sigma_eve2"} <= set(names)
    assert not any(n.startswith(("solver", "experiment")) for n in names)


def test_apply_sweep_leaves_base_untouched():
    base = ScenarioFile()
    swept = apply_sweep(base, "hwi.k1", 0.0)
    assert swept.hwi.k1 == 0.0
    assert base.hwi.k1 == pytest.approx(2.258e5)


def test_apply_sweep_alias_and_broadcast():
    base = ScenarioFile()
    assert (apply_sweep(base, "n_antennas", 5).n_ps, apply_sweep(base, "n_antennas", 5).n_ap) == (5, 5)
    assert apply_sweep(base, "qos.r_req", 6.0).qos.r_req == [6.0, 6.0]


def test_apply_sweep_over_receiver_count():
    swept = apply_sweep(ScenarioFile(), "n_irs", 3)
    assert swept.n_irs == 3
    assert swept.qos.r_req == [4.0, 4.0, 4.0]


def test_apply_sweep_rejects_unknown_param():
    with pytest.raises(ConfigError):
        apply_sweep(ScenarioFile(), "solver.tol", 1e-6)
    with pytest.raises(ConfigError):
        apply_sweep(ScenarioFile(), "qos.r_tol", -1.0)
