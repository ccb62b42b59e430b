"""
wpcn Command Line
=================
Solve single instances, run Monte-Carlo experiments and sweeps, verify stored
allocations and print the default scenario.

Usage:
    python -m wpcn solve --config configs/desk.yaml --scheme optimal --seed 3
    python -m wpcn montecarlo --config configs/desk.yaml --trials 20 --out results/mc.csv
    python -m wpcn sweep --config configs/desk.yaml --param qos.r_req --values 4,6,8
    python -m wpcn verify results/alloc.json --samples 10000
    python -m wpcn dump-config
    python -m wpcn serve --port 8000
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from .config import HOST, LOG_LEVEL, PORT, SCHEMES, load_scenario, dump_scenario, sweepable_params
from .errors import WpcnError
from .pipelines.harness import (
    ExperimentSpec, allocation_file_record, emit_outputs, jsonable, load_allocation, monte_carlo,
    save_allocation, solve_instance, sweep_estimation_error, verify_allocation,
)

logger = logging.getLogger("wpcn")


def _values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _scenario(args):
    scenario = load_scenario(args.config)
    if getattr(args, "grid_n", None):
        scenario.solver.grid_n = args.grid_n
    return scenario


# =============================================================================
# COMMANDS
# =============================================================================

def cmd_solve(args) -> int:
    scenario = _scenario(args)
    cfg, channels, alloc, report = solve_instance(scenario, args.scheme, args.seed)
    print(json.dumps(jsonable(report.to_dict()), indent=2))
    if alloc is None:
        print(f"❌ {args.scheme}: {report.status.value} ({'; '.join(report.notes)})")
        return 1
    if args.save:
        path = save_allocation(allocation_file_record(scenario, args.seed, args.scheme, alloc, channels, report), args.save)
        print(f"💾 allocation written to {path}")
    marker = "✅" if report.feasible else "⚠️"
    print(f"{marker} {args.scheme}: {report.status.value}, objective {report.objective:.6e} W, "
          f"tau=({report.tau1:.4f}, {report.tau2:.4f}), {report.n_solves} SDP solves")
    return 0 if report.feasible else 2


def _run_experiment(args, spec: ExperimentSpec, estimation_error: bool = False) -> int:
    table = sweep_estimation_error(spec, not args.quiet) if estimation_error else monte_carlo(spec, not args.quiet)
    paths = emit_outputs(table, spec.output)
    for kind, path in paths.items():
        print(f"✅ {kind}: {path}")
    return 0


def cmd_montecarlo(args) -> int:
    scenario = _scenario(args)
    spec = ExperimentSpec.from_scenario(
        scenario, n_trials=args.trials, seed=args.seed, schemes=args.schemes, output=args.out,
        workers=args.workers, record_timing=args.timing or None, traces=args.traces or None,
        n_security_samples=args.samples,
    )
    return _run_experiment(args, spec)


def cmd_sweep(args) -> int:
    scenario = _scenario(args)
    spec = ExperimentSpec.from_scenario(
        scenario, n_trials=args.trials, seed=args.seed, schemes=args.schemes, output=args.out,
        workers=args.workers, record_timing=args.timing or None, traces=args.traces or None,
        n_security_samples=args.samples,
        sweep_param=args.param, sweep_values=args.values,
    )
    return _run_experiment(args, spec, estimation_error=args.param == "sigma_eve2")


def cmd_verify(args) -> int:
    record = load_allocation(args.allocation)
    result = verify_allocation(record, n_samples=args.samples, seed=args.seed, rank_tol=args.rank_tol)
    print(json.dumps(jsonable(result), indent=2))
    security = result["security"]
    if result["passed"]:
        print(f"✅ rank-one and secure over {security['n_samples']} samples "
              f"(worst eavesdropper rate {security['worst_capacity']:.4g})")
        return 0
    print(f"❌ verification failed: rank_one={result['rank']['rank_one']}, "
          f"{security['n_violations']} violating samples")
    return 1


def cmd_dump_config(args) -> int:
    sys.stdout.write(dump_scenario(load_scenario(args.config)))
    return 0


def cmd_serve(args) -> int:
    try:
        import uvicorn
    except ImportError:
        print("❌ uvicorn not installed. Run: pip install uvicorn fastapi")
        return 1
    print(f"🚀 Starting wpcn service on {args.host}:{args.port}")
    uvicorn.run("app:app", host=args.host, port=args.port)
    return 0


# =============================================================================
# PARSER
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wpcn", description="Robust secure resource allocation for WPCNs")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="logging level (WPCN_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials: bool = False):
        p.add_argument("--config", "-c", help="scenario file (YAML or JSON)")
        p.add_argument("--seed", type=int, default=None if trials else 0, help="channel / master seed")
        p.add_argument("--grid-n", type=int, help="tau grid resolution per axis")
        if trials:
            p.add_argument("--trials", "-n", type=int, help="Monte-Carlo trials per point")
            p.add_argument("--schemes", nargs="+", choices=SCHEMES, help="schemes to run")
            p.add_argument("--out", "-o", help="output CSV path")
            p.add_argument("--workers", "-w", type=int, help="worker threads (WPCN_WORKERS)")
            p.add_argument("--samples", type=int, help="security samples per trial")
            p.add_argument("--timing", action="store_true", help="write solve_ms (breaks byte-identity)")
            p.add_argument("--traces", action="store_true", help="write AO convergence traces as JSON")
            p.add_argument("--quiet", "-q", action="store_true", help="no progress bar")

    p = sub.add_parser("solve", help="solve one channel realization")
    common(p)
    p.add_argument("--scheme", "-s", default="optimal", choices=SCHEMES)
    p.add_argument("--save", help="write the allocation file for `verify`")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("montecarlo", help="Monte-Carlo run over random channels")
    common(p, trials=True)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("sweep", help="Monte-Carlo run over one parameter")
    common(p, trials=True)
    p.add_argument("--param", "-p", required=True, help=f"one of: {', '.join(sweepable_params())}")
    p.add_argument("--values", "-v", required=True, type=_values, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="rank and robustness check of an allocation file")
    p.add_argument("allocation")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rank-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dump-config", help="print the fully defaulted scenario as YAML")
    p.add_argument("--config", "-c")
    p.set_defaults(func=cmd_dump_config)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default=HOST)
    p.add_argument("--port", type=int, default=PORT)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WpcnError as e:
        print(f"❌ {type(e).__name__}: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
