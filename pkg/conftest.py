"""Shared fixtures: a small feasible scenario and its channel realization."""

import pytest

from wpcn.config import parse_scenario
from wpcn.utils.channels import generate_channels
from wpcn.utils.conic import available_backends

SMALL_SCENARIO = {
    "n_ps": 2,
    "n_ap": 2,
    "n_ev": 1,
    "n_irs": 1,
    "qos": {"r_req": [2.0], "r_tol": 0.5},
    "topology": {"pathloss_reference": "unit"},
    "solver": {"grid_n": 4, "omega_grid_n": 5, "audit_samples": 32, "randomization_candidates": 20},
    "experiment": {"n_trials": 2, "seed": 7, "n_security_samples": 32},
}


@pytest.fixture
def small_scenario():
    return parse_scenario(SMALL_SCENARIO)


@pytest.fixture
def small_cfg(small_scenario):
    return small_scenario.to_system_config()


@pytest.fixture
def small_channels(small_scenario, small_cfg):
    return generate_channels(small_cfg, small_scenario.to_topology(), seed=11)


@pytest.fixture
def desk_cfg():
    return parse_scenario({"topology": {"pathloss_reference": "unit"}}).to_system_config()


requires_solver = pytest.mark.skipif(not available_backends(), reason="no conic backend installed")
