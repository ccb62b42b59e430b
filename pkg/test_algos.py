"""Tests for the time-split search, omega_bar search, alternating optimization and scheme registry."""

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from conftest import SMALL_SCENARIO, requires_solver
from wpcn.config import SCHEMES, parse_scenario
from wpcn.pipelines.algos import (
    SCHEME_REGISTRY, GridPoint, SdpEvaluator, SolveReport, TrialStatus, feasible_bracket, grid_search,
    min_leakage_gamma, omega_max, run_scheme, search_omega, tau_grid, tau_lp, tau_pairs,
)
from wpcn.pipelines.alloc import extract_allocation, lmi_scale
from wpcn.utils.channels import generate_channels
from wpcn.utils.model import Allocation
from wpcn.utils.robust import sample_verify_security


class FakeEvaluator:
    """Stands in for SdpEvaluator with a closed-form objective in omega_bar."""

    def __init__(self, cfg, channels, settings, objective):
        self.cfg = cfg
        self.channels = channels
        self.settings = settings
        self.objective = objective
        self.points = {}

    def value(self, tau1, tau2, omega_bar):
        v = self.objective(tau1, tau2, omega_bar)
        if math.isfinite(v):
            self.points[(tau1, tau2, omega_bar)] = GridPoint(tau1, tau2, omega_bar, v, None)
        return v

    def evaluated(self, tau1, tau2):
        return [p for (t1, t2, _), p in self.points.items() if t1 == tau1 and t2 == tau2]


# =============================================================================
# GRIDS
# =============================================================================

def test_tau_grid_starts_at_tau_min(small_cfg):
    grid = tau_grid(small_cfg, 10)
    assert grid[0] == small_cfg.tau_min
    assert len(grid) == 10
    assert grid[-1] < small_cfg.t_max


def test_tau_grid_is_nested(small_cfg):
    coarse = tau_grid(small_cfg, 5)
    fine = tau_grid(small_cfg, 10)
    np.testing.assert_allclose(fine[::2], coarse, rtol=0, atol=1e-15)


def test_tau_pairs_respect_slot(small_cfg):
    pairs = tau_pairs(small_cfg, 8)
    assert pairs
    assert all(t1 + t2 <= small_cfg.t_max + 1e-12 for t1, t2 in pairs)
    assert all(min(t1, t2) >= small_cfg.tau_min for t1, t2 in pairs)
    assert len(pairs) < 64


def test_omega_max(small_cfg, small_channels):
    ll = small_channels.l_mat @ small_channels.l_mat.conj().T
    assert omega_max(small_cfg, small_channels) == pytest.approx(np.linalg.eigvalsh(ll)[-1] * small_cfg.p_max_ps)


# =============================================================================
# OMEGA SEARCH
# =============================================================================

def test_omega_search_finds_interior_minimum(small_scenario, small_cfg, small_channels):
    hi = omega_max(small_cfg, small_channels)

    def objective(t1, t2, w):
        return math.inf if w < 0.3 * hi else 1.0 + ((w - 0.6 * hi) / hi) ** 2

    ev = FakeEvaluator(small_cfg, small_channels, small_scenario.solver, objective)
    best = search_omega(ev, 0.3, 0.6)
    assert best.omega_bar == pytest.approx(0.6 * hi, rel=1e-3)
    assert best.objective == pytest.approx(1.0, abs=1e-6)
    assert min(w for (_, _, w) in ev.points) == pytest.approx(0.3 * hi, rel=1e-3)


def test_omega_search_returns_endpoint(small_scenario, small_cfg, small_channels):
    hi = omega_max(small_cfg, small_channels)
    ev = FakeEvaluator(small_cfg, small_channels, small_scenario.solver, lambda t1, t2, w: 2.0 - w / hi)
    best = search_omega(ev, 0.3, 0.6)
    assert best.omega_bar == hi
    # the grid cross-check ran
    assert len(ev.points) >= small_scenario.solver.omega_grid_n


def test_omega_search_infeasible_split(small_scenario, small_cfg, small_channels):
    ev = FakeEvaluator(small_cfg, small_channels, small_scenario.solver, lambda t1, t2, w: math.inf)
    assert search_omega(ev, 0.3, 0.6) is None


def test_omega_search_brackets_an_infeasible_omega_max(small_scenario, small_cfg, small_channels):
    hi = omega_max(small_cfg, small_channels)

    def objective(t1, t2, w):
        return 1.0 + w / hi if 0.2 * hi <= w <= 0.7 * hi else math.inf

    ev = FakeEvaluator(small_cfg, small_channels, small_scenario.solver, objective)
    assert feasible_bracket(ev, 0.3, 0.6) == pytest.approx((0.2 * hi, 0.7 * hi), rel=1e-3)
    best = search_omega(ev, 0.3, 0.6)
    assert best.omega_bar == pytest.approx(0.2 * hi, rel=1e-3)


def test_omega_search_finds_a_narrow_low_interval(small_scenario, small_cfg, small_channels):
    # missed by the linear scan, caught by the geometric one
    hi = omega_max(small_cfg, small_channels)

    def objective(t1, t2, w):
        return 1.0 + w / hi if 1e-4 * hi <= w <= 2e-3 * hi else math.inf

    ev = FakeEvaluator(small_cfg, small_channels, small_scenario.solver, objective)
    best = search_omega(ev, 0.3, 0.6)
    assert best is not None
    assert best.omega_bar == pytest.approx(1e-4 * hi, rel=1e-3)
    assert max(w for (_, _, w) in ev.points) == pytest.approx(2e-3 * hi, rel=1e-3)


def test_grid_search_breaks_ties_towards_short_phases(small_scenario, small_cfg, small_channels):
    ev = FakeEvaluator(small_cfg, small_channels, small_scenario.solver, lambda t1, t2, w: 1.0)
    pairs = tau_pairs(small_cfg, 4)
    best = grid_search(ev, list(reversed(pairs)))
    assert (best.tau1, best.tau2) == (small_cfg.tau_min, small_cfg.tau_min)
    assert best.omega_bar == 0.0


def test_grid_search_prefers_lower_objective(small_scenario, small_cfg, small_channels):
    ev = FakeEvaluator(small_cfg, small_channels, small_scenario.solver, lambda t1, t2, w: 1.0 + (t1 - 0.5) ** 2)
    pairs = tau_pairs(small_cfg, 4)
    best = grid_search(ev, pairs)
    assert best.tau1 == min((t1 for t1, _ in pairs), key=lambda t: abs(t - 0.5))


# =============================================================================
# TIME-SPLIT LP
# =============================================================================

def _certified_allocation(cfg, channels, jam: float = 1.0) -> Allocation:
    """Unit-power beam towards the IR, isotropic jamming, zero LMI multipliers."""
    h = channels.h[0]
    alloc = Allocation.zeros(cfg, 0.5, 0.5).with_beamformers([h / np.linalg.norm(h)])
    alloc.w_cov = [np.outer(w, w.conj()) for w in alloc.w_vec]
    alloc.u_cov = jam * np.eye(cfg.n_ap, dtype=complex)
    alloc.certificate = {"n_mat": np.zeros((cfg.n_ev, cfg.n_ev), complex), "t": np.zeros(cfg.n_irs),
                         "gamma": 0.0, "scale": lmi_scale(channels)}
    return alloc


def test_min_leakage_gamma_with_zero_multipliers(small_cfg, small_channels):
    # with t = 0 the certificate reads U - W / Gamma >= 0, i.e. Gamma >= |w|^2 / jam
    cfg = small_cfg.without_impairments()
    alloc = _certified_allocation(cfg, small_channels, jam=2.0)
    assert min_leakage_gamma(alloc, cfg, small_channels) == pytest.approx(0.5, rel=1e-6)


def test_min_leakage_gamma_rejects_broken_certificate(small_cfg, small_channels):
    cfg = small_cfg.without_impairments()
    alloc = _certified_allocation(cfg, small_channels)
    alloc.certificate["n_mat"] = np.eye(cfg.n_ev, dtype=complex)
    assert min_leakage_gamma(alloc, cfg, small_channels) is None


def test_tau_lp_needs_a_positive_rate(small_cfg, small_channels):
    alloc = Allocation.zeros(small_cfg, 0.5, 0.5)
    assert tau_lp(alloc, small_cfg, small_channels, omega_bar=0.0) is None


def test_tau_lp_uses_shortest_feasible_phases(small_cfg, small_channels):
    cfg = replace(small_cfg.without_impairments(), e_res=100.0)
    alloc = _certified_allocation(cfg, small_channels)
    step = tau_lp(alloc, cfg, small_channels, omega_bar=0.0)
    assert step is not None
    tau1, tau2 = step
    h = small_channels.h[0]
    rate = math.log2(1.0 + np.vdot(h, h).real / cfg.sigma_ir2)
    assert tau1 == pytest.approx(cfg.tau_min)
    assert tau2 == pytest.approx(cfg.qos.r_req[0] / rate, rel=1e-5)
    # leakage bound Gamma = 1 caps tau2 at r_tol
    assert tau2 <= cfg.qos.r_tol * (1 + 1e-5)


def test_tau_lp_without_energy_is_infeasible(small_cfg, small_channels):
    # no reserve and nothing harvested at omega_bar = 0
    cfg = small_cfg.without_impairments()
    alloc = _certified_allocation(cfg, small_channels)
    assert tau_lp(alloc, cfg, small_channels, omega_bar=0.0) is None


# =============================================================================
# REGISTRY
# =============================================================================

def test_registry_covers_all_schemes():
    assert set(SCHEME_REGISTRY) == set(SCHEMES)


def test_unknown_scheme(small_cfg, small_channels):
    with pytest.raises(KeyError):
        run_scheme("greedy", small_cfg, small_channels)


def test_report_serialization():
    report = SolveReport(scheme="optimal", status=TrialStatus.INFEASIBLE, notes=["no split"])
    d = report.to_dict()
    assert d["status"] == "infeasible"
    assert d["power"] is None and d["rank"] is None
    assert not report.feasible


# =============================================================================
# END TO END
# =============================================================================

class SchemeRuns:
    """Schemes on one small channel realization, each solved on first use."""

    def __init__(self, data=SMALL_SCENARIO, seed: int = 11):
        self.scenario = parse_scenario(data)
        self.settings = self.scenario.solver
        self.cfg = self.scenario.to_system_config()
        self.channels = generate_channels(self.cfg, self.scenario.to_topology(), seed=seed)
        self._results = {}

    def __getitem__(self, scheme):
        if scheme not in self._results:
            self._results[scheme] = run_scheme(scheme, self.cfg, self.channels, self.settings)
        return self._results[scheme]

    def best_at(self, cfg=None, channels=None):
        """omega_bar search at the optimal time split, inf when infeasible."""
        _, report = self["optimal"]
        ev = SdpEvaluator(cfg or self.cfg, channels or self.channels, self.settings)
        point = search_omega(ev, report.tau1, report.tau2)
        return math.inf if point is None else point.objective


@pytest.fixture(scope="module")
def runs():
    return SchemeRuns()


def _non_decreasing(values, rel):
    return all(b >= a * (1 - rel) for a, b in zip(values, values[1:]))


@requires_solver
def test_optimal_solution_passes_audit(runs):
    alloc, report = runs["optimal"]
    assert report.status == TrialStatus.FEASIBLE
    assert report.audit.passed, report.audit.violations()
    assert report.audit.security.passed
    assert report.tau1 + report.tau2 <= runs.cfg.t_max + 1e-12
    assert alloc.w_vec is not None
    assert abs(report.audit.tightness["C1[0]"]) <= 1e-4


@requires_solver
@pytest.mark.parametrize("scheme", ["optimal", "perfect_hw"])
def test_relaxation_is_rank_one(runs, scheme):
    _, report = runs[scheme]
    assert report.feasible
    assert report.rank.rank_one, report.rank.w_ratios
    assert not report.randomized


@requires_solver
@pytest.mark.parametrize("n_samples", [2000, pytest.param(10_000, marks=pytest.mark.slow)])
def test_optimal_allocation_is_robustly_secure(runs, n_samples):
    alloc, _ = runs["optimal"]
    security = sample_verify_security(alloc, runs.channels, runs.cfg, n_samples, seed=5, tol=runs.settings.audit_tol)
    assert security.passed


@requires_solver
def test_alternating_optimization_converges_near_the_grid_optimum(runs):
    alloc, report = runs["ao"]
    _, optimal = runs["optimal"]
    assert alloc is not None and report.feasible
    objectives = [step["objective"] for step in report.trace]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(objectives, objectives[1:]))
    assert 1 <= report.iterations <= 10
    assert report.objective <= optimal.objective * 1.03


@requires_solver
def test_scheme_ordering(runs):
    _, optimal = runs["optimal"]
    _, ideal = runs["perfect_hw"]
    _, isotropic = runs["isotropic"]
    _, unaware = runs["ignore_hwi"]
    assert optimal.feasible and ideal.feasible
    assert ideal.objective <= optimal.objective * (1 + 1e-6)
    if isotropic.status != TrialStatus.INFEASIBLE:
        assert optimal.objective <= isotropic.objective * (1 + 1e-6)
    # same ideal design, audited against the impaired system
    assert unaware.objective == pytest.approx(ideal.objective, rel=1e-9)


@requires_solver
def test_power_grows_with_the_rate_target(runs):
    values = [runs.best_at(cfg=replace(runs.cfg, qos=replace(runs.cfg.qos, r_req=(r,)))) for r in (1.0, 2.0, 3.0)]
    assert math.isfinite(values[1])
    assert values[0] < values[1]
    assert _non_decreasing(values, 1e-6)


@requires_solver
def test_power_grows_with_transmit_distortion(runs):
    k1 = runs.cfg.hwi.k1
    values = [runs.best_at(cfg=replace(runs.cfg, hwi=replace(runs.cfg.hwi, k1=k))) for k in (0.0, k1, 10 * k1)]
    assert math.isfinite(values[0])
    assert _non_decreasing(values, 1e-3)


@requires_solver
def test_power_grows_with_the_estimation_error(runs):
    ch = runs.channels
    values = [runs.best_at(channels=replace(ch, ups_ap_e=f * ch.ups_ap_e, ups_ps_e=f * ch.ups_ps_e))
              for f in (1.0, 2.0, 4.0)]
    assert math.isfinite(values[0])
    assert _non_decreasing(values, 1e-3)


@requires_solver
def test_no_jamming_without_a_nearby_eavesdropper(runs):
    # every eavesdropper link and its error ball scaled by 1e-3
    _, report = runs["optimal"]
    ch = runs.channels
    far = replace(ch, g_hat=1e-3 * ch.g_hat, e_hat=1e-3 * ch.e_hat, ups_ap_e=1e-3 * ch.ups_ap_e,
                  ups_ps_e=1e-3 * ch.ups_ps_e, true_dg=None, true_de=None)
    ev = SdpEvaluator(runs.cfg, far, runs.settings)
    point = search_omega(ev, report.tau1, report.tau2)
    assert point is not None
    alloc = extract_allocation(point.solution, ev.program(report.tau1, report.tau2, point.omega_bar))
    assert np.trace(alloc.u_cov).real <= 1e-6 * alloc.total_radiated_power()


@pytest.mark.slow
@requires_solver
def test_desk_scale_acceptance():
    data = yaml.safe_load((Path(__file__).parent / "configs" / "desk.yaml").read_text(encoding="utf-8"))
    data.pop("experiment")
    rank_one, near_optimal, n = 0, 0, 0
    for seed in range(5):
        trial = SchemeRuns(data, seed=seed)
        _, optimal = trial["optimal"]
        if not optimal.feasible:
            continue
        n += 1
        _, ideal = trial["perfect_hw"]
        _, ao = trial["ao"]
        assert ideal.objective <= optimal.objective * (1 + 1e-6)
        rank_one += optimal.rank.rank_one
        near_optimal += ao.feasible and abs(ao.objective - optimal.objective) <= 0.03 * optimal.objective
    assert n >= 3
    assert rank_one >= 0.95 * n
    assert near_optimal >= 0.9 * n
