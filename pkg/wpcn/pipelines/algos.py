"""
Allocation Algorithms
=====================
Optimal 2-D time-split search, alternating optimization, baselines and the
perfect-hardware benchmark, all built on the fixed-(tau1, tau2, omega_bar) SDP.

Features:
- Nested tau grid with deterministic tie-breaking, optional worker pool
- omega_bar search: anchor scan, edge bisection, bounded golden-section, grid fallback
- A solution counts as feasible only when its audit passes
- Alternating optimization with the time-split LP and a monotone objective trace
- Isotropic energy-beam baseline, HWI-ignorant baseline, perfect-hardware benchmark
- Uniform scheme registry: (cfg, channels, settings) -> (Allocation, SolveReport)
"""

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize

from ..config import SolverSettings
from ..utils.conic import ConicProgram, ConicSession, Solution, SolveStatus, solve
from ..utils.model import Allocation, PowerBreakdown, SystemConfig, dbm_to_watt, harvested_power, ir_sinr, power_accounting
from ..utils.robust import certificate_values
from .alloc import (
    AuditReport, RankDiagnostics, SdpOptions, audit_solution, build_sdp, extract_allocation,
    lmi_scale, randomize_beamformers, recover_beamformers, security_blocks, with_sdp_params,
)

logger = logging.getLogger(__name__)


# =============================================================================
# REPORTS
# =============================================================================

class TrialStatus(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    QOS_VIOLATED = "qos-violated"
    FAILED = "numerical-failure"


@dataclass
class SolveReport:
    """Outcome of one scheme on one channel realization."""
    scheme: str
    status: TrialStatus
    objective: float = math.inf
    tau1: float = math.nan
    tau2: float = math.nan
    omega_bar: float = math.nan
    power: Optional[PowerBreakdown] = None
    rank: Optional[RankDiagnostics] = None
    audit: Optional[AuditReport] = None
    iterations: int = 0
    trace: List[Dict[str, float]] = field(default_factory=list)
    n_solves: int = 0
    solve_time: float = 0.0
    randomized: bool = False
    notes: List[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == TrialStatus.FEASIBLE

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "status": self.status.value,
            "objective": self.objective,
            "tau1": self.tau1,
            "tau2": self.tau2,
            "omega_bar": self.omega_bar,
            "power": self.power.to_dict() if self.power else None,
            "rank": self.rank.to_dict() if self.rank else None,
            "audit": self.audit.to_dict() if self.audit else None,
            "iterations": self.iterations,
            "trace": self.trace,
            "n_solves": self.n_solves,
            "solve_time": self.solve_time,
            "randomized": self.randomized,
            "notes": self.notes,
        }


@dataclass
class GridPoint:
    tau1: float
    tau2: float
    omega_bar: float
    objective: float
    solution: Solution


# =============================================================================
# FIXED-POINT EVALUATOR
# =============================================================================

class SdpEvaluator:
    """
    Solves the SDP at (tau1, tau2, omega_bar) for one channel realization.

    The program is assembled once and re-targeted through its parameters;
    each worker thread gets its own ConicSession. Solutions are memoized.
    """

    def __init__(self, cfg: SystemConfig, channels, settings: SolverSettings,
                 options: Optional[SdpOptions] = None, session: Optional[ConicSession] = None):
        self.cfg = cfg
        self.channels = channels
        self.settings = settings
        self.options = options or SdpOptions(distortion_encoding=settings.distortion_encoding,
                                             pwl_segments=settings.pwl_segments, backend=settings.backend)
        self._template: Optional[ConicProgram] = None
        self._cache: Dict[Tuple[float, float, float], Solution] = {}
        self._lock = threading.Lock()
        self._local = threading.local()
        if session is not None:
            self._local.session = session
        self.n_solves = 0
        self.solve_time = 0.0

    def _session(self) -> ConicSession:
        session = getattr(self._local, "session", None)
        if session is None:
            session = self._local.session = ConicSession()
        return session

    def program(self, tau1: float, tau2: float, omega_bar: float) -> ConicProgram:
        with self._lock:
            if self._template is None:
                self._template = build_sdp(tau1, tau2, omega_bar, self.cfg, self.channels, self.options)
                return self._template
        return with_sdp_params(self._template, self.cfg, tau1, tau2, omega_bar)

    def solve(self, tau1: float, tau2: float, omega_bar: float) -> Solution:
        key = (tau1, tau2, omega_bar)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        try:
            prog = self.program(tau1, tau2, omega_bar)
        except OverflowError:
            # secrecy target beyond float range: no feasible leakage bound
            sol = Solution(SolveStatus.INFEASIBLE, diagnostics="Gamma_tol overflow")
        else:
            sol = solve(prog, tol=self.settings.tol, backend=self.settings.backend, session=self._session())
        with self._lock:
            self._cache[key] = sol
            self.n_solves += 1
            self.solve_time += sol.solve_time
        logger.debug("sdp tau=(%.4f, %.4f) omega=%.4e -> %s %.6e", tau1, tau2, omega_bar,
                     sol.status.value, sol.objective)
        return sol

    def value(self, tau1: float, tau2: float, omega_bar: float) -> float:
        sol = self.solve(tau1, tau2, omega_bar)
        return sol.objective if sol.ok else math.inf

    def statuses(self) -> List[SolveStatus]:
        with self._lock:
            return [s.status for s in self._cache.values()]

    def evaluated(self, tau1: float, tau2: float) -> List[GridPoint]:
        with self._lock:
            items = list(self._cache.items())
        return [GridPoint(t1, t2, w, s.objective, s) for (t1, t2, w), s in items
                if t1 == tau1 and t2 == tau2 and s.ok]


# =============================================================================
# OMEGA SEARCH
# =============================================================================

def omega_max(cfg: SystemConfig, channels) -> float:
    """Received RF power at the AP when the PS radiates P_max along the best direction."""
    ll = np.asarray(channels.l_mat) @ np.asarray(channels.l_mat).conj().T
    return float(np.linalg.eigvalsh(ll)[-1]) * cfg.p_max_ps


def _feasible(ev: SdpEvaluator, tau1: float, tau2: float, omega_bar: float) -> bool:
    return math.isfinite(ev.value(tau1, tau2, omega_bar))


def _edge(ev: SdpEvaluator, tau1: float, tau2: float, good: float, bad: float, floor: float) -> float:
    """Bisect to the feasibility edge between a feasible and an infeasible omega_bar."""
    rel_tol = ev.settings.omega_rel_tol
    while abs(good - bad) > max(rel_tol * good, floor):
        mid = 0.5 * (good + bad)
        if _feasible(ev, tau1, tau2, mid):
            good = mid
        else:
            bad = mid
    return good


def feasible_bracket(ev: SdpEvaluator, tau1: float, tau2: float) -> Optional[Tuple[float, float]]:
    """
    Feasible omega_bar interval for a fixed time split, None when none is found.

    omega_max is infeasible whenever the energy beam carries distortion, so a
    descending scan (linear and geometric points) looks for a feasible anchor
    first; both edges are then bisected from it.
    """
    hi = omega_max(ev.cfg, ev.channels)
    if hi <= 0:
        return (0.0, 0.0) if _feasible(ev, tau1, tau2, 0.0) else None
    n = ev.settings.omega_grid_n
    scan = sorted(set(np.linspace(hi, 0.0, n)) | set(np.geomspace(hi, 1e-6 * hi, n)), reverse=True)
    floor = 1e-12 * hi
    above = None
    for w in map(float, scan):
        if _feasible(ev, tau1, tau2, w):
            upper = w if above is None else _edge(ev, tau1, tau2, w, above, floor)
            lower = 0.0 if _feasible(ev, tau1, tau2, 0.0) else _edge(ev, tau1, tau2, w, 0.0, floor)
            return lower, upper
        above = w
    return None


def search_omega(ev: SdpEvaluator, tau1: float, tau2: float) -> Optional[GridPoint]:
    """
    Best omega_bar for a fixed time split.

    The feasible omega set is an interval: a larger omega_bar relaxes the
    energy constraint and tightens the received-power constraint. Its edges
    come from ``feasible_bracket``, then a bounded golden-section search
    minimizes the objective; a grid pass runs when an edge beats it.
    """
    settings = ev.settings
    bracket = feasible_bracket(ev, tau1, tau2)
    if bracket is None:
        return None
    lo, hi = bracket

    if hi - lo > settings.omega_rel_tol * hi:
        penalty = 1e30
        optimize.minimize_scalar(
            lambda w: min(ev.value(tau1, tau2, float(w)), penalty),
            bounds=(lo, hi), method="bounded",
            options={"xatol": settings.omega_rel_tol * (hi - lo)},
        )
        points = ev.evaluated(tau1, tau2)
        inner = [p for p in points if lo < p.omega_bar < hi]
        best_inner = min((p.objective for p in inner), default=math.inf)
        edge = min(ev.value(tau1, tau2, lo), ev.value(tau1, tau2, hi))
        if edge < best_inner - 1e-9 * abs(best_inner) or settings.debug_unimodality:
            golden = min(best_inner, edge)
            for w in np.linspace(lo, hi, settings.omega_grid_n):
                ev.value(tau1, tau2, float(w))
            grid_best = min(p.objective for p in ev.evaluated(tau1, tau2))
            if grid_best < golden - 1e-6 * abs(golden):
                logger.warning("omega search at tau=(%.4f, %.4f) is not unimodal", tau1, tau2)

    points = ev.evaluated(tau1, tau2)
    if not points:
        return None
    return min(points, key=lambda p: (p.objective, p.omega_bar))


# =============================================================================
# OPTIMAL 2-D SEARCH
# =============================================================================

def tau_grid(cfg: SystemConfig, grid_n: int) -> np.ndarray:
    """grid_n points per axis from tau_min, nested when grid_n doubles."""
    return cfg.tau_min + np.arange(grid_n) * (cfg.t_max - cfg.tau_min) / grid_n


def tau_pairs(cfg: SystemConfig, grid_n: int) -> List[Tuple[float, float]]:
    taus = [float(t) for t in tau_grid(cfg, grid_n)]
    return [(t1, t2) for t1 in taus for t2 in taus if t1 + t2 <= cfg.t_max + 1e-12]


def _finalize(ev: SdpEvaluator, point: GridPoint, scheme: str, audit_cfg: Optional[SystemConfig] = None,
              seed: int = 0) -> Tuple[Allocation, SolveReport]:
    settings = ev.settings
    cfg = audit_cfg or ev.cfg
    prog = ev.program(point.tau1, point.tau2, point.omega_bar)
    alloc = extract_allocation(point.solution, prog)
    alloc, rank = recover_beamformers(alloc, settings.rank_tol)
    randomized = False
    if not rank.rank_one:
        candidate = randomize_beamformers(alloc, ev.cfg, ev.channels, settings.randomization_candidates, seed=seed)
        if candidate is not None:
            alloc, randomized = candidate, True
    audit = audit_solution(alloc, cfg, ev.channels, settings.audit_samples, seed=seed, tol=settings.audit_tol)
    status = TrialStatus.FEASIBLE if audit.passed else TrialStatus.QOS_VIOLATED
    report = SolveReport(
        scheme=scheme, status=status, objective=point.objective,
        tau1=point.tau1, tau2=point.tau2, omega_bar=point.omega_bar,
        power=audit.power, rank=rank, audit=audit, randomized=randomized,
        n_solves=ev.n_solves, solve_time=ev.solve_time,
    )
    if not audit.passed:
        report.notes.append("audit: " + ", ".join(audit.violations()))
    return alloc, report


def _no_solution(ev: SdpEvaluator, scheme: str, note: str) -> Tuple[None, SolveReport]:
    statuses = ev.statuses()
    failed = bool(statuses) and all(s == SolveStatus.NUMERICAL_FAILURE for s in statuses)
    status = TrialStatus.FAILED if failed else TrialStatus.INFEASIBLE
    return None, SolveReport(scheme=scheme, status=status, n_solves=ev.n_solves,
                             solve_time=ev.solve_time, notes=[note])


def grid_search(ev: SdpEvaluator, pairs: List[Tuple[float, float]]) -> Optional[GridPoint]:
    """Best point over the time-split pairs; ties go to the smaller tau1, then tau2."""
    workers = ev.settings.grid_workers
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: search_omega(ev, *p), pairs))
    else:
        results = [search_omega(ev, *p) for p in pairs]
    feasible = [r for r in results if r is not None]
    if not feasible:
        return None
    return min(feasible, key=lambda p: (p.objective, p.tau1, p.tau2))


def solve_optimal(cfg: SystemConfig, channels, settings: Optional[SolverSettings] = None,
                  options: Optional[SdpOptions] = None, session: Optional[ConicSession] = None,
                  scheme: str = "optimal", audit_cfg: Optional[SystemConfig] = None,
                  seed: int = 0) -> Tuple[Optional[Allocation], SolveReport]:
    """Exhaustive search over the tau grid with an omega_bar search at every pair."""
    settings = settings or SolverSettings()
    ev = SdpEvaluator(cfg, channels, settings, options, session)
    pairs = tau_pairs(cfg, settings.grid_n)
    logger.info("%s: %d time-split pairs (grid_n=%d)", scheme, len(pairs), settings.grid_n)
    best = grid_search(ev, pairs)
    if best is None:
        return _no_solution(ev, scheme, "no feasible time split on the grid")
    return _finalize(ev, best, scheme, audit_cfg, seed)


# =============================================================================
# ALTERNATING OPTIMIZATION
# =============================================================================

def min_leakage_gamma(alloc: Allocation, cfg: SystemConfig, channels, tol: float = 1e-9) -> Optional[float]:
    """
    Smallest eavesdropper SINR bound certified by the fixed LMI certificate.

    Returns None when the certificate fails even without the W_k term.
    """
    scale = float(alloc.certificate.get("scale", lmi_scale(channels)))
    c2a, c2b = security_blocks(channels, 1.0, scale, inv_gamma_param="inv_gamma_tol")
    values = certificate_values(alloc)
    norm = max(1.0, max(np.linalg.norm(b.evaluate(values, {"inv_gamma_tol": 0.0})) for b in c2a))

    def certified(x: float) -> bool:
        return min(b.min_eigenvalue(values, {"inv_gamma_tol": x}) for b in c2a) >= -tol * norm

    if not certified(0.0) or c2b.min_eigenvalue(values) < -tol * norm:
        return None
    good, bad = 0.0, 1.0
    while certified(bad):
        good, bad = bad, 2.0 * bad
        if bad > 1e15:
            return 0.0
    for _ in range(100):
        mid = 0.5 * (good + bad)
        if certified(mid):
            good = mid
        else:
            bad = mid
        if bad - good <= 1e-12 * bad:
            break
    return math.inf if good == 0.0 else 1.0 / good


# solver-accuracy allowance on the rate rows; the next SDP enforces them exactly
LP_RATE_SLACK = 1e-6


def tau_lp(alloc: Allocation, cfg: SystemConfig, channels,
           omega_bar: Optional[float] = None) -> Optional[Tuple[float, float]]:
    """
    Time split minimizing tau1 * P_PS-I + tau2 * (P_AP-II + P_PS-II) at fixed powers.

    C1 and C2 enter in rate form (tau2 * log2(1 + SINR) against R_req and R_tol),
    C4 with the harvested power at ``omega_bar``. None when the LP is infeasible.
    """
    omega = alloc.rho_recv if omega_bar is None else omega_bar
    power = power_accounting(alloc, cfg)
    xi = harvested_power(max(omega, 0.0), cfg.eh)

    a_ub: List[List[float]] = [[1.0, 1.0], [-xi, power.p_ap2]]
    b_ub: List[float] = [cfg.t_max, cfg.e_res]
    for k, r_req in enumerate(cfg.qos.r_req):
        rate = math.log2(1.0 + ir_sinr(k, alloc, channels, cfg))
        if rate <= 0:
            return None
        a_ub.append([0.0, -rate])
        b_ub.append(-r_req * (1.0 - LP_RATE_SLACK))
    c_star = min_leakage_gamma(alloc, cfg, channels)
    if c_star is None or math.isinf(c_star):
        return None
    leak = math.log2(1.0 + c_star)
    if leak > 0:
        a_ub.append([0.0, leak])
        b_ub.append(cfg.qos.r_tol * (1.0 + LP_RATE_SLACK))

    res = optimize.linprog(
        c=[power.p_ps1, power.p_ap2 + power.p_ps2], A_ub=a_ub, b_ub=b_ub,
        bounds=[(cfg.tau_min, cfg.t_max)] * 2, method="highs",
    )
    if not res.success:
        logger.debug("tau LP: %s", res.message)
        return None
    return float(res.x[0]), float(res.x[1])


def solve_ao(cfg: SystemConfig, channels, settings: Optional[SolverSettings] = None,
             options: Optional[SdpOptions] = None, session: Optional[ConicSession] = None,
             init: Optional[Tuple[float, float]] = None, seed: int = 0,
             scheme: str = "ao") -> Tuple[Optional[Allocation], SolveReport]:
    """
    Alternate the time-split LP and the beamforming SDP until both tau move by at most psi.

    A step that would raise the objective is rejected and ends the loop, so
    the objective trace never increases.
    """
    settings = settings or SolverSettings()
    ev = SdpEvaluator(cfg, channels, settings, options, session)
    clip = lambda t: min(max(t, cfg.tau_min), cfg.t_max)  # noqa: E731
    starts = [init] if init else [(0.2 * cfg.t_max, 0.8 * cfg.t_max), (0.5 * cfg.t_max, 0.5 * cfg.t_max)]

    point = None
    for t1, t2 in starts:
        point = search_omega(ev, clip(t1), clip(t2))
        if point is not None:
            break
    if point is None:
        return _no_solution(ev, scheme, "no feasible initial time split")

    trace = [{"iteration": 0, "tau1": point.tau1, "tau2": point.tau2, "objective": point.objective}]
    notes: List[str] = []
    iterations = 0
    for iteration in range(1, settings.ao_l_max + 1):
        iterations = iteration
        current = extract_allocation(point.solution, ev.program(point.tau1, point.tau2, point.omega_bar))
        step = tau_lp(current, cfg, channels, point.omega_bar)
        if step is None:
            notes.append(f"tau LP infeasible at iteration {iteration}")
            break
        t1, t2 = step
        converged = abs(t1 - point.tau1) <= settings.ao_psi and abs(t2 - point.tau2) <= settings.ao_psi
        candidate = search_omega(ev, t1, t2)
        if candidate is None:
            notes.append(f"SDP infeasible at iteration {iteration}")
            break
        if candidate.objective > point.objective + 1e-9 * max(1.0, abs(point.objective)):
            notes.append(f"objective increase rejected at iteration {iteration}")
            break
        point = candidate
        trace.append({"iteration": iteration, "tau1": point.tau1, "tau2": point.tau2, "objective": point.objective})
        logger.debug("ao %d: tau=(%.5f, %.5f) obj=%.6e", iteration, t1, t2, point.objective)
        if converged:
            break

    alloc, report = _finalize(ev, point, scheme, seed=seed)
    report.iterations = iterations
    report.trace = trace
    report.notes.extend(notes)
    return alloc, report


# =============================================================================
# BASELINES
# =============================================================================

ISOTROPIC_POWER_DBM = 40.0


def baseline_isotropic(cfg: SystemConfig, channels, settings: Optional[SolverSettings] = None,
                       session: Optional[ConicSession] = None, seed: int = 0):
    """Energy beam fixed to p I / n_ps, power caps raised to 40 dBm, no distortion credit in C5."""
    settings = settings or SolverSettings()
    options = SdpOptions(distortion_encoding=settings.distortion_encoding, pwl_segments=settings.pwl_segments,
                         isotropic_v=True, harvest_credit=False, backend=settings.backend)
    capped = cfg.with_power_caps(dbm_to_watt(ISOTROPIC_POWER_DBM))
    return solve_optimal(capped, channels, settings, options, session, scheme="isotropic", seed=seed)


def baseline_ignore_hwi(cfg: SystemConfig, channels, settings: Optional[SolverSettings] = None,
                        session: Optional[ConicSession] = None, seed: int = 0):
    """Designed for ideal hardware, audited under the true impairments."""
    return solve_optimal(cfg.without_impairments(), channels, settings, session=session,
                         scheme="ignore_hwi", audit_cfg=cfg, seed=seed)


def benchmark_perfect_hw(cfg: SystemConfig, channels, settings: Optional[SolverSettings] = None,
                         session: Optional[ConicSession] = None, seed: int = 0):
    return solve_optimal(cfg.without_impairments(), channels, settings, session=session,
                         scheme="perfect_hw", seed=seed)


def _optimal(cfg, channels, settings=None, session=None, seed=0):
    return solve_optimal(cfg, channels, settings, session=session, seed=seed)


def _ao(cfg, channels, settings=None, session=None, seed=0):
    return solve_ao(cfg, channels, settings, session=session, seed=seed)


SCHEME_REGISTRY: Dict[str, Callable] = {
    "optimal": _optimal,
    "ao": _ao,
    "isotropic": baseline_isotropic,
    "ignore_hwi": baseline_ignore_hwi,
    "perfect_hw": benchmark_perfect_hw,
}


def run_scheme(scheme: str, cfg: SystemConfig, channels, settings: Optional[SolverSettings] = None,
               session: Optional[ConicSession] = None, seed: int = 0) -> Tuple[Optional[Allocation], SolveReport]:
    if scheme not in SCHEME_REGISTRY:
        raise KeyError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEME_REGISTRY)}")
    start = time.perf_counter()
    alloc, report = SCHEME_REGISTRY[scheme](cfg, channels, settings, session=session, seed=seed)
    logger.info("%s -> %s (obj %.4e, %d solves, %.1f s)", scheme, report.status.value, report.objective,
                report.n_solves, time.perf_counter() - start)
    return alloc, report
