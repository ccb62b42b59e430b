"""
Metrics & Monitoring Module
===========================
Prometheus metrics and health checks for the wpcn solvers and experiment harness.

Features:
- Conic solve counters and latency histograms (per backend and status)
- Monte-Carlo trial counters, latency and in-flight gauge (per scheme)
- HTTP request metrics for the optional service
- In-memory fallback when prometheus_client is not installed
- Timing decorator for instrumented operations
- Health checker reporting solver backend availability
"""

import sys
import threading
import time
from collections import defaultdict, deque
from datetime import datetime, timezone
from functools import wraps
from typing import Callable, Deque, Dict, Optional, Tuple

import numpy as np

from . import __version__

# Try to import prometheus client
try:
    from prometheus_client import (
        Counter, Histogram, Gauge, Info,
        generate_latest, CONTENT_TYPE_LATEST, REGISTRY
    )
    PROMETHEUS_AVAILABLE = True
except ImportError:
    PROMETHEUS_AVAILABLE = False
    print("⚠️ prometheus_client not installed. Metrics kept in memory. Run: pip install prometheus-client")


# =============================================================================
# METRICS DEFINITIONS
# =============================================================================

if PROMETHEUS_AVAILABLE:
    SOLVE_COUNT = Counter(
        'wpcn_conic_solves_total',
        'Total conic program solves',
        ['backend', 'status']
    )

    SOLVE_LATENCY = Histogram(
        'wpcn_conic_solve_seconds',
        'Conic solve latency in seconds',
        ['backend'],
        buckets=[0.001, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 5.0]
    )

    TRIAL_COUNT = Counter(
        'wpcn_trials_total',
        'Total Monte-Carlo trials',
        ['scheme', 'status']
    )

    TRIAL_LATENCY = Histogram(
        'wpcn_trial_seconds',
        'Trial wall time in seconds',
        ['scheme'],
        buckets=[0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0, 900.0]
    )

    TRIALS_IN_PROGRESS = Gauge(
        'wpcn_trials_in_progress',
        'Number of trials currently running'
    )

    OPERATION_LATENCY = Histogram(
        'wpcn_operation_seconds',
        'Latency of instrumented operations',
        ['operation'],
        buckets=[0.001, 0.01, 0.1, 0.5, 1.0, 5.0, 30.0]
    )

    OPERATION_ERRORS = Counter(
        'wpcn_operation_errors_total',
        'Errors raised by instrumented operations',
        ['operation', 'error_type']
    )

    REQUEST_COUNT = Counter(
        'wpcn_requests_total',
        'Total HTTP requests',
        ['method', 'endpoint', 'status']
    )

    REQUEST_LATENCY = Histogram(
        'wpcn_request_latency_seconds',
        'HTTP request latency in seconds',
        ['method', 'endpoint'],
        buckets=[0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0, 120.0]
    )

    APP_INFO = Info('wpcn_app', 'Application information')
    APP_INFO.info({'version': __version__, 'python_version': sys.version.split()[0]})


# =============================================================================
# IN-MEMORY METRICS (fallback when Prometheus not available)
# =============================================================================

SeriesKey = Tuple[str, Tuple[Tuple[str, str], ...]]


def _series(name: str, labels: Optional[Dict] = None) -> SeriesKey:
    return name, tuple(sorted((k, str(v)) for k, v in (labels or {}).items()))


def _series_name(key: SeriesKey) -> str:
    name, labels = key
    if not labels:
        return f"wpcn_{name}"
    return f"wpcn_{name}{{" + ",".join(f'{k}="{v}"' for k, v in labels) + "}"


class InMemoryMetrics:
    """Labelled counters, gauges and a sliding window of observations per series."""

    window = 1000

    def __init__(self):
        self.counters: Dict[SeriesKey, float] = defaultdict(float)
        self.gauges: Dict[SeriesKey, float] = defaultdict(float)
        self.observations: Dict[SeriesKey, Deque[float]] = defaultdict(lambda: deque(maxlen=self.window))
        self.started = time.monotonic()
        self._lock = threading.Lock()

    def inc_counter(self, name: str, labels: Optional[Dict] = None, value: float = 1):
        with self._lock:
            self.counters[_series(name, labels)] += value

    def observe_histogram(self, name: str, value: float, labels: Optional[Dict] = None):
        with self._lock:
            self.observations[_series(name, labels)].append(float(value))

    def add_gauge(self, name: str, delta: float, labels: Optional[Dict] = None):
        with self._lock:
            self.gauges[_series(name, labels)] += delta

    def get_summary(self) -> Dict:
        """Counters and gauges by series name, windowed count / mean / p50 / p95 / max per histogram."""
        with self._lock:
            counters = dict(self.counters)
            gauges = dict(self.gauges)
            windows = {k: np.fromiter(v, float) for k, v in self.observations.items() if v}
        return {
            "uptime_seconds": time.monotonic() - self.started,
            "counters": {_series_name(k): v for k, v in counters.items()},
            "gauges": {_series_name(k): v for k, v in gauges.items()},
            "histograms": {
                _series_name(k): {
                    "count": int(v.size),
                    "mean": float(v.mean()),
                    "p50": float(np.percentile(v, 50)),
                    "p95": float(np.percentile(v, 95)),
                    "max": float(v.max()),
                }
                for k, v in windows.items()
            },
        }


# Global fallback metrics
fallback_metrics = InMemoryMetrics()


# =============================================================================
# METRICS HELPER FUNCTIONS
# =============================================================================

def record_solve(backend: str, status: str, latency: float):
    """Record one conic solve."""
    if PROMETHEUS_AVAILABLE:
        SOLVE_COUNT.labels(backend=backend, status=status).inc()
        SOLVE_LATENCY.labels(backend=backend).observe(latency)
    else:
        fallback_metrics.inc_counter("conic_solves_total", {"backend": backend, "status": status})
        fallback_metrics.observe_histogram("conic_solve_seconds", latency, {"backend": backend})


def record_trial(scheme: str, status: str, latency: float):
    """Record one finished Monte-Carlo trial."""
    if PROMETHEUS_AVAILABLE:
        TRIAL_COUNT.labels(scheme=scheme, status=status).inc()
        TRIAL_LATENCY.labels(scheme=scheme).observe(latency)
    else:
        fallback_metrics.inc_counter("trials_total", {"scheme": scheme, "status": status})
        fallback_metrics.observe_histogram("trial_seconds", latency, {"scheme": scheme})


def track_trial(started: bool):
    """Move the in-flight trial gauge up or down."""
    if PROMETHEUS_AVAILABLE:
        if started:
            TRIALS_IN_PROGRESS.inc()
        else:
            TRIALS_IN_PROGRESS.dec()
    else:
        fallback_metrics.add_gauge("trials_in_progress", 1 if started else -1)


def record_operation(operation: str, latency: float, error: Optional[str] = None):
    if PROMETHEUS_AVAILABLE:
        OPERATION_LATENCY.labels(operation=operation).observe(latency)
        if error:
            OPERATION_ERRORS.labels(operation=operation, error_type=error).inc()
    else:
        fallback_metrics.observe_histogram("operation_seconds", latency, {"operation": operation})
        if error:
            fallback_metrics.inc_counter("operation_errors_total", {"operation": operation, "error_type": error})


def record_request(method: str, endpoint: str, status: int, latency: float):
    """Record HTTP request metrics."""
    if PROMETHEUS_AVAILABLE:
        REQUEST_COUNT.labels(method=method, endpoint=endpoint, status=str(status)).inc()
        REQUEST_LATENCY.labels(method=method, endpoint=endpoint).observe(latency)
    else:
        fallback_metrics.inc_counter("requests_total", {"method": method, "endpoint": endpoint, "status": status})
        fallback_metrics.observe_histogram("request_latency_seconds", latency, {"method": method, "endpoint": endpoint})


def export_metrics() -> Tuple[object, str]:
    """Return (payload, content_type) for a /metrics endpoint."""
    if PROMETHEUS_AVAILABLE:
        return generate_latest(REGISTRY), CONTENT_TYPE_LATEST

    summary = fallback_metrics.get_summary()
    lines = ["# wpcn metrics (in-memory fallback)", f"wpcn_uptime_seconds {summary['uptime_seconds']:.2f}"]
    lines += [f"{name} {value}" for name, value in summary["counters"].items()]
    lines += [f"{name} {value}" for name, value in summary["gauges"].items()]
    for name, stats in summary["histograms"].items():
        lines.append(f"# {name} count={stats['count']} mean={stats['mean']:.6g} "
                     f"p50={stats['p50']:.6g} p95={stats['p95']:.6g} max={stats['max']:.6g}")
    return "\n".join(lines) + "\n", "text/plain"


# =============================================================================
# TIMING DECORATOR
# =============================================================================

def timed(operation: str):
    """Decorator to time an operation and count its failures."""
    def decorator(func: Callable):
        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            error = None
            try:
                return func(*args, **kwargs)
            except Exception as e:
                error = type(e).__name__
                raise
            finally:
                record_operation(operation, time.perf_counter() - start, error)
        return wrapper
    return decorator


# =============================================================================
# HEALTH CHECK
# =============================================================================

class HealthChecker:
    """Named checks returning a bool or a dict with a ``healthy`` key."""

    def __init__(self):
        self.checks: Dict[str, Callable] = {}
        self.started = time.monotonic()

    def register_check(self, name: str, check_func: Callable):
        self.checks[name] = check_func

    def _run(self, check_func: Callable) -> Dict:
        try:
            outcome = check_func()
        except Exception as e:
            return {"status": "unhealthy", "error": f"{type(e).__name__}: {e}"}
        details = outcome if isinstance(outcome, dict) else None
        healthy = bool(outcome.get("healthy", True)) if details is not None else bool(outcome)
        return {"status": "healthy" if healthy else "unhealthy", "details": details}

    def run_checks(self) -> Dict:
        checks = {name: self._run(func) for name, func in self.checks.items()}
        healthy = all(c["status"] == "healthy" for c in checks.values())
        return {
            "status": "healthy" if healthy else "unhealthy",
            "uptime_seconds": time.monotonic() - self.started,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "checks": checks,
        }


# Global health checker
health_checker = HealthChecker()


def check_solver_backends():
    """At least one conic backend able to handle PSD cones must be installed."""
    from .utils.conic import available_backends
    backends = available_backends()
    return {"backends": backends, "healthy": len(backends) > 0}


health_checker.register_check("solver", check_solver_backends)
