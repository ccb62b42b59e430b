"""
Monte-Carlo Harness
===================
Runs schemes over random channel realizations and parameter sweeps, and
writes result tables.

Features:
- ExperimentSpec validated before any trial runs
- Per-trial seeds shared across schemes and sweep values (paired runs)
- Thread pool with one conic session per worker, rows in deterministic order
- Aggregate rows (mean power in dBm, feasibility rate, iterations, rank ratio)
- Main CSV, breakdown CSV, AO traces JSON and a standalone plot script
"""

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from ..config import ScenarioFile, apply_sweep, parse_scenario, validate_sweep_param
from ..errors import ConfigError
from ..metrics import record_trial, track_trial
from ..utils.channels import ChannelSet, derive_seed, generate_channels
from ..utils.codec import LAYOUT
from ..utils.conic import ConicSession
from ..utils.model import Allocation, watt_to_dbm
from ..utils.robust import SecurityReport, sample_verify_security
from .algos import SolveReport, TrialStatus, run_scheme
from .alloc import allocation_from_record, allocation_to_record, recover_beamformers

logger = logging.getLogger(__name__)


# =============================================================================
# CONFIGURATION
# =============================================================================

CSV_COLUMNS = [
    "trial", "scheme", "sweep_param", "sweep_value", "status", "p_total_dbm", "p_reported_dbm",
    "tau1", "tau2", "omega_bar", "max_rank_ratio", "trace_u_watt", "worst_sampled_eve_rate",
    "ao_iterations", "solve_ms", "seed",
]

BREAKDOWN_COLUMNS = [
    "trial", "scheme", "sweep_param", "sweep_value", "status", "objective_watt", "reported_watt",
    "trace_w_watt", "trace_v_watt", "trace_z_watt", "trace_u_watt", "tau1", "tau2",
    "min_secrecy_rate", "max_antenna_power_watt", "below_1w", "randomized", "audit_passed", "violations",
]

AGGREGATE = "aggregate"
ESTIMATION_ERROR_VALUES = (0.0, 0.005, 0.01)


@dataclass
class ExperimentSpec:
    """What to run: base scenario, optional sweep axis, schemes, trials and seed."""
    scenario: ScenarioFile
    schemes: List[str]
    n_trials: int
    seed: int = 0
    sweep_param: Optional[str] = None
    sweep_values: List[Any] = field(default_factory=list)
    output: Optional[Path] = None
    n_security_samples: int = 1000
    workers: int = 1
    record_timing: bool = False
    traces: bool = False

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        if self.sweep_param is not None:
            validate_sweep_param(self.sweep_param)
            if not self.sweep_values:
                raise ConfigError(f"sweep over {self.sweep_param!r} needs values")
            # fail fast on values the schema rejects
            for value in self.sweep_values:
                apply_sweep(self.scenario, self.sweep_param, value)

    @classmethod
    def from_scenario(cls, scenario: ScenarioFile, **overrides) -> "ExperimentSpec":
        exp = scenario.experiment
        fields = {
            "scenario": scenario,
            "schemes": list(exp.schemes),
            "n_trials": exp.n_trials,
            "seed": exp.seed,
            "sweep_param": exp.sweep_param,
            "sweep_values": list(exp.sweep_values),
            "output": Path(exp.output),
            "n_security_samples": exp.n_security_samples,
            "workers": exp.workers,
            "record_timing": exp.record_timing,
            "traces": exp.traces,
        }
        fields.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**fields)

    def scenarios(self) -> List[Tuple[Any, ScenarioFile]]:
        if self.sweep_param is None:
            return [(None, self.scenario)]
        return [(v, apply_sweep(self.scenario, self.sweep_param, v)) for v in self.sweep_values]


@dataclass
class TrialResult:
    sweep_index: int
    sweep_value: Any
    scheme: str
    trial: int
    seed: int
    report: SolveReport
    alloc: Optional[Allocation] = None
    security: Optional[SecurityReport] = None
    below_1w: Optional[bool] = None


@dataclass
class ResultTable:
    rows: List[Dict[str, str]] = field(default_factory=list)
    breakdown: List[Dict[str, str]] = field(default_factory=list)
    traces: List[Dict[str, Any]] = field(default_factory=list)


def trial_seed(master: int, trial: int) -> int:
    """Channel seed of one trial; independent of scheme and sweep value."""
    return derive_seed(master, trial)


# =============================================================================
# TRIALS
# =============================================================================

_worker = threading.local()


def _worker_session() -> ConicSession:
    session = getattr(_worker, "session", None)
    if session is None:
        session = _worker.session = ConicSession()
    return session


def run_trial(scenario: ScenarioFile, scheme: str, trial: int, seed: int, n_security_samples: int,
              sweep_index: int = 0, sweep_value: Any = None,
              session: Optional[ConicSession] = None) -> TrialResult:
    """Generate channels, run one scheme, sample its security; failures become a failed row."""
    track_trial(True)
    start = time.perf_counter()
    alloc, security, below = None, None, None
    try:
        cfg = scenario.to_system_config()
        channels = generate_channels(cfg, scenario.to_topology(), seed)
        alloc, report = run_scheme(scheme, cfg, channels, scenario.solver, session or _worker_session(), seed)
        if alloc is not None:
            security = sample_verify_security(alloc, channels, cfg, n_security_samples, seed=seed)
            below = max_antenna_power(alloc) < 1.0
    except Exception as e:
        logger.exception("trial %d (%s, seed %d) failed", trial, scheme, seed)
        report = SolveReport(scheme=scheme, status=TrialStatus.FAILED, notes=[f"{type(e).__name__}: {e}"])
    finally:
        track_trial(False)
    record_trial(scheme, report.status.value, time.perf_counter() - start)
    return TrialResult(sweep_index, sweep_value, scheme, trial, seed, report, alloc, security, below)


def max_antenna_power(alloc: Allocation) -> float:
    diags = [np.real(np.diag(m)) for m in (alloc.v_cov, alloc.z_cov, alloc.ap_covariance())]
    return float(max(d.max(initial=0.0) for d in diags))


# =============================================================================
# ROWS
# =============================================================================

def _fmt(value: Any) -> str:
    """Shortest round-trip text; empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def _dbm(watt: Optional[float]) -> Optional[float]:
    return None if watt is None else watt_to_dbm(watt)


def _row(result: TrialResult, sweep_param: Optional[str], record_timing: bool) -> Dict[str, str]:
    r = result.report
    ok = r.feasible or r.status == TrialStatus.QOS_VIOLATED
    values = {
        "trial": result.trial,
        "scheme": result.scheme,
        "sweep_param": sweep_param or "",
        "sweep_value": result.sweep_value,
        "status": r.status.value,
        "p_total_dbm": _dbm(r.power.objective) if ok and r.power else None,
        "p_reported_dbm": _dbm(r.power.reported) if ok and r.power else None,
        "tau1": r.tau1 if ok else None,
        "tau2": r.tau2 if ok else None,
        "omega_bar": r.omega_bar if ok else None,
        "max_rank_ratio": r.rank.max_ratio if r.rank else None,
        "trace_u_watt": float(np.real(np.trace(result.alloc.u_cov))) if result.alloc is not None else None,
        "worst_sampled_eve_rate": result.security.worst_capacity if result.security else None,
        "ao_iterations": r.iterations if result.scheme == "ao" and ok else None,
        "solve_ms": 1e3 * r.solve_time if record_timing else None,
        "seed": result.seed,
    }
    return {k: _fmt(values[k]) for k in CSV_COLUMNS}


def _breakdown_row(result: TrialResult, sweep_param: Optional[str]) -> Dict[str, str]:
    r, a = result.report, result.alloc
    tr = lambda m: float(np.real(np.trace(m)))  # noqa: E731
    values = {
        "trial": result.trial,
        "scheme": result.scheme,
        "sweep_param": sweep_param or "",
        "sweep_value": result.sweep_value,
        "status": r.status.value,
        "objective_watt": r.power.objective if r.power else None,
        "reported_watt": r.power.reported if r.power else None,
        "trace_w_watt": sum(tr(w) for w in a.info_covariances()) if a is not None else None,
        "trace_v_watt": tr(a.v_cov) if a is not None else None,
        "trace_z_watt": tr(a.z_cov) if a is not None else None,
        "trace_u_watt": tr(a.u_cov) if a is not None else None,
        "tau1": r.tau1,
        "tau2": r.tau2,
        "min_secrecy_rate": min(r.audit.secrecy_rates, default=None) if r.audit else None,
        "max_antenna_power_watt": max_antenna_power(a) if a is not None else None,
        "below_1w": result.below_1w,
        "randomized": r.randomized if a is not None else None,
        "audit_passed": r.audit.passed if r.audit else None,
        "violations": " ".join(r.audit.violations()) if r.audit else "",
    }
    return {k: _fmt(values[k]) for k in BREAKDOWN_COLUMNS}


def _mean(values: Sequence[float]) -> Optional[float]:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else None


def aggregate_rows(rows: Sequence[Dict[str, str]], record_timing: bool = False) -> List[Dict[str, str]]:
    """
    One row per (sweep value, scheme) from the raw rows alone.

    Power columns hold the dBm of the mean Watts; the remaining numeric
    columns are plain means, all over the feasible trials.
    """
    groups: Dict[Tuple[str, str, str], List[Dict[str, str]]] = {}
    for row in rows:
        if row["trial"] == AGGREGATE:
            continue
        groups.setdefault((row["sweep_param"], row["sweep_value"], row["scheme"]), []).append(row)

    num = lambda row, col: float(row[col]) if row[col] != "" else None  # noqa: E731
    out = []
    for (param, value, scheme), members in groups.items():
        feasible = [r for r in members if r["status"] == TrialStatus.FEASIBLE.value]
        watts = lambda col: _mean([10 ** ((num(r, col) - 30) / 10) for r in feasible if num(r, col) is not None])  # noqa: E731
        mean = lambda col: _mean([num(r, col) for r in feasible])  # noqa: E731
        values = {
            "trial": AGGREGATE,
            "scheme": scheme,
            "sweep_param": param,
            "sweep_value": value,
            "status": f"feasible_rate={_fmt(len(feasible) / len(members))}",
            "p_total_dbm": _dbm(watts("p_total_dbm")),
            "p_reported_dbm": _dbm(watts("p_reported_dbm")),
            "tau1": mean("tau1"),
            "tau2": mean("tau2"),
            "omega_bar": mean("omega_bar"),
            "max_rank_ratio": mean("max_rank_ratio"),
            "trace_u_watt": mean("trace_u_watt"),
            "worst_sampled_eve_rate": mean("worst_sampled_eve_rate"),
            "ao_iterations": mean("ao_iterations"),
            "solve_ms": _mean([num(r, "solve_ms") for r in members]) if record_timing else None,
            "seed": None,
        }
        out.append({k: values[k] if isinstance(values[k], str) else _fmt(values[k]) for k in CSV_COLUMNS})
    return out


# =============================================================================
# DRIVERS
# =============================================================================

def monte_carlo(spec: ExperimentSpec, progress: bool = True) -> ResultTable:
    """Every (sweep value, scheme, trial) once; raw rows in that order, then aggregates."""
    scenarios = spec.scenarios()
    jobs = [(i, scheme, t) for i in range(len(scenarios)) for scheme in spec.schemes for t in range(spec.n_trials)]
    logger.info("monte carlo: %d jobs (%d sweep values x %d schemes x %d trials), %d workers",
                len(jobs), len(scenarios), len(spec.schemes), spec.n_trials, spec.workers)

    results: Dict[Tuple[int, str, int], TrialResult] = {}
    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        futures = {
            pool.submit(run_trial, scenarios[i][1], scheme, t, trial_seed(spec.seed, t),
                        spec.n_security_samples, i, scenarios[i][0]): (i, scheme, t)
            for i, scheme, t in jobs
        }
        for future in tqdm(as_completed(futures), total=len(futures), desc="trials", disable=not progress):
            results[futures[future]] = future.result()

    table = ResultTable()
    for key in jobs:
        result = results[key]
        table.rows.append(_row(result, spec.sweep_param, spec.record_timing))
        table.breakdown.append(_breakdown_row(result, spec.sweep_param))
        if spec.traces and result.report.trace:
            table.traces.append({
                "trial": result.trial, "scheme": result.scheme, "seed": result.seed,
                "sweep_value": result.sweep_value, "trace": result.report.trace,
            })
    table.rows.extend(aggregate_rows(table.rows, spec.record_timing))
    return table


def sweep_estimation_error(spec: ExperimentSpec, progress: bool = True) -> ResultTable:
    """Monte-Carlo over the normalized CSI estimation error; radii follow from each value."""
    if spec.sweep_param not in (None, "sigma_eve2"):
        raise ConfigError(f"estimation-error sweep cannot run over {spec.sweep_param!r}")
    values = spec.sweep_values or list(ESTIMATION_ERROR_VALUES)
    fields = {**spec.__dict__, "sweep_param": "sigma_eve2", "sweep_values": values}
    return monte_carlo(ExperimentSpec(**fields), progress)


# =============================================================================
# OUTPUT
# =============================================================================

PLOT_SCRIPT = '''"""Plot mean power against the sweep value from {csv_name}."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
series = defaultdict(list)
label = "sweep value"
with open(path, newline="", encoding="utf-8") as fh:
    for row in csv.DictReader(fh):
        if row["trial"] != "aggregate" or row["p_total_dbm"] == "":
            continue
        label = row["sweep_param"] or label
        x = float(row["sweep_value"]) if row["sweep_value"] else 0.0
        series[row["scheme"]].append((x, float(row["p_total_dbm"])))

for scheme, points in sorted(series.items()):
    points.sort()
    plt.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=scheme)
plt.xlabel(label)
plt.ylabel("average total power (dBm)")
plt.grid(True)
plt.legend()
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def _write_csv(path: Path, columns: List[str], rows: Sequence[Dict[str, str]]):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def emit_outputs(table: ResultTable, path: Union[str, Path]) -> Dict[str, Path]:
    """Write the main CSV, its breakdown, AO traces (if any) and a plot script next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stem = path.with_suffix("")
    paths = {
        "csv": path,
        "breakdown": stem.parent / f"{stem.name}_breakdown.csv",
        "plot": stem.parent / f"{stem.name}_plot.py",
    }
    _write_csv(paths["csv"], CSV_COLUMNS, table.rows)
    _write_csv(paths["breakdown"], BREAKDOWN_COLUMNS, table.breakdown)
    paths["plot"].write_text(PLOT_SCRIPT.format(csv_name=path.name), encoding="utf-8")
    if table.traces:
        paths["traces"] = stem.parent / f"{stem.name}_traces.json"
        paths["traces"].write_text(json.dumps(table.traces, indent=2), encoding="utf-8")
    logger.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return paths


def read_table(path: Union[str, Path]) -> List[Dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def solve_instance(scenario: ScenarioFile, scheme: str = "optimal", seed: int = 0,
                   session: Optional[ConicSession] = None):
    """One scheme on the channel realization of ``seed``: (cfg, channels, alloc, report)."""
    cfg = scenario.to_system_config()
    channels = generate_channels(cfg, scenario.to_topology(), seed)
    alloc, report = run_scheme(scheme, cfg, channels, scenario.solver, session, seed)
    return cfg, channels, alloc, report


# =============================================================================
# ALLOCATION FILES
# =============================================================================

ALLOCATION_FORMAT = "wpcn-allocation/1"


def allocation_file_record(scenario: ScenarioFile, seed: int, scheme: str, alloc: Allocation,
                           channels, report: Optional[SolveReport] = None) -> Dict[str, Any]:
    """Everything `verify` needs: scenario, channel realization and the allocation."""
    return {
        "format": ALLOCATION_FORMAT,
        "layout": LAYOUT,
        "scheme": scheme,
        "seed": seed,
        "scenario": scenario.model_dump(mode="json"),
        "channels": channels.to_record(),
        "allocation": allocation_to_record(alloc),
        "report": None if report is None else report.to_dict(),
    }


def save_allocation(record: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(record), indent=2), encoding="utf-8")
    return path


def load_allocation(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read allocation file {path}: {e}") from e
    if record.get("format") != ALLOCATION_FORMAT:
        raise ConfigError(f"{path}: not a {ALLOCATION_FORMAT} file")
    return record


def verify_allocation(record: Dict[str, Any], n_samples: int = 1000, seed: int = 0,
                      rank_tol: float = 1e-6) -> Dict[str, Any]:
    """Rank diagnostics and robustness sampling of a stored allocation."""
    scenario = parse_scenario(record.get("scenario"))
    cfg = scenario.to_system_config()
    if record.get("channels"):
        channels = ChannelSet.from_record(record["channels"])
    else:
        channels = generate_channels(cfg, scenario.to_topology(), int(record["seed"]))
    alloc = allocation_from_record(record["allocation"])
    recovered, rank = recover_beamformers(alloc, rank_tol)
    if alloc.w_vec is None:
        alloc = recovered
    security = sample_verify_security(alloc, channels, cfg, n_samples, seed=seed)
    return {
        "rank": rank.to_dict(),
        "security": security.to_dict(),
        "passed": bool(rank.rank_one and security.passed),
    }


def jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, Enum):
        return obj.value
    return obj
