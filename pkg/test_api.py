"""Tests for the HTTP service and the metrics helpers."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from wpcn.api.server import create_app
from wpcn.config import SCHEMES, parse_scenario
from wpcn.metrics import HealthChecker, InMemoryMetrics, check_solver_backends, export_metrics, timed
from wpcn.pipelines.harness import allocation_file_record, jsonable
from wpcn.utils.channels import generate_channels
from wpcn.utils.model import Allocation


@pytest.fixture
def client():
    return TestClient(create_app())


def test_root(client):
    body = client.get("/").json()
    assert body["status"] == "ok"
    assert body["schemes"] == list(SCHEMES)


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code in (200, 503)
    assert "solver" in resp.json()["checks"]
    assert (resp.status_code == 200) == check_solver_backends()["healthy"]


def test_default_config(client):
    body = client.get("/config/default").json()
    assert body["n_ps"] == 3
    assert body["qos"]["r_req"] == [4.0, 4.0]
    parse_scenario(body)


def test_metrics_endpoint(client):
    client.get("/")
    resp = client.get("/metrics")
    assert resp.status_code == 200
    assert "wpcn" in resp.text


def test_response_time_header(client):
    assert client.get("/").headers["X-Response-Time"].endswith("s")


def test_unknown_scheme(client):
    resp = client.post("/solve", json={"scheme": "greedy"})
    assert resp.status_code == 422


def test_invalid_scenario(client):
    resp = client.post("/solve", json={"scenario": {"n_ps": 1, "n_ap": 1, "n_ev": 3}})
    assert resp.status_code == 422
    assert resp.json()["error"] == "ConfigError"


def test_verify_rejects_bad_scenario(client):
    resp = client.post("/verify", json={"record": {"scenario": {"bogus": 1}}})
    assert resp.status_code == 422


def test_verify_secure_allocation(client, small_scenario):
    scenario = parse_scenario({**small_scenario.model_dump(), "hwi": {"k1": 0.0, "k2": 1.0, "k3": 0.0}})
    cfg = scenario.to_system_config()
    channels = generate_channels(cfg, scenario.to_topology(), 5)
    h = channels.h[0]
    alloc = Allocation.zeros(cfg, 0.5, 0.5).with_beamformers([1e-3 * h / np.linalg.norm(h)])
    alloc.w_cov = [np.outer(w, w.conj()) for w in alloc.w_vec]
    alloc.u_cov = np.eye(cfg.n_ap, dtype=complex)
    record = jsonable(allocation_file_record(scenario, 5, "optimal", alloc, channels))
    body = client.post("/verify", json={"record": record, "n_samples": 40}).json()
    assert body["passed"] is True
    assert body["security"]["n_samples"] == 40


def test_in_memory_metrics():
    metrics = InMemoryMetrics()
    metrics.inc_counter("trials_total", {"status": "feasible", "scheme": "ao"})
    metrics.inc_counter("trials_total", {"scheme": "ao", "status": "feasible"})
    for v in range(1, 101):
        metrics.observe_histogram("trial_seconds", float(v))
    metrics.add_gauge("trials_in_progress", 1)
    summary = metrics.get_summary()
    assert summary["counters"]['wpcn_trials_total{scheme="ao",status="feasible"}'] == 2
    assert summary["gauges"]["wpcn_trials_in_progress"] == 1
    stats = summary["histograms"]["wpcn_trial_seconds"]
    assert stats["count"] == 100
    assert stats["mean"] == pytest.approx(50.5)
    assert stats["max"] == 100.0


def test_health_checker_reports_failures():
    checker = HealthChecker()
    checker.register_check("ok", lambda: True)
    checker.register_check("broken", lambda: 1 / 0)
    checker.register_check("degraded", lambda: {"healthy": False, "reason": "x"})
    result = checker.run_checks()
    assert result["status"] == "unhealthy"
    assert result["checks"]["ok"]["status"] == "healthy"
    assert "ZeroDivisionError" in result["checks"]["broken"]["error"]
    assert result["checks"]["degraded"]["details"]["reason"] == "x"


def test_timed_reraises():
    @timed("unit_test_op")
    def boom():
        raise ValueError("x")

    with pytest.raises(ValueError):
        boom()
    payload, content_type = export_metrics()
    assert payload
    assert content_type
