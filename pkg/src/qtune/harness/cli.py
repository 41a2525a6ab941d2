"""``tune`` command line.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..core import ContractError
from ..hmooc import (
    Method,
    aggregate,
    brute_force_front,
    even_weights,
    generate_candidates,
    tune,
    wun_recommend,
)
from ..runtime import RuntimePolicy, simulate
from .bench import BenchConfig, run_benchmark, sig, solver_config, write_report
from .workload import ConfigError, Scenario, gen_workload, load_yaml, WorkloadSpec

OUT_DIR_ENV = "TUNE_OUT_DIR"
DEFAULT_OUT_DIR = "tune-out"


def _workload_and_solver(path):
    data = load_yaml(path)
    if "workload" in data or "solver" in data:
        extra = set(data) - {"workload", "solver"}
        if extra:
            raise ConfigError(f"{path}: unknown sections {sorted(extra)}")
        spec = WorkloadSpec.from_dict(data.get("workload"))
        solver = solver_config(data.get("solver"))
    else:
        spec, solver = WorkloadSpec.from_dict(data), solver_config(None)
    return gen_workload(spec), solver


def _parse_weights(text: str) -> tuple:
    try:
        w = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --weights {text!r}") from exc
    if len(w) != 2:
        raise ConfigError("--weights takes two comma-separated numbers")
    return w


def _solution_dict(sol) -> dict:
    return {
        "objectives": [sig(v) for v in sol.objectives],
        "theta_c": list(sol.theta_c.coords),
        "theta_p": [list(p.coords) for p in sol.theta_p],
        "theta_s": [list(s.coords) for s in sol.theta_s],
    }


def _emit(payload: dict, out) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        path = Path(out)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    wl, solver = _workload_and_solver(args.workload)
    weights = _parse_weights(args.weights)
    try:
        method = Method(args.method)
    except ValueError as exc:
        raise ConfigError(f"unknown method {args.method!r}") from exc
    cands = generate_candidates(wl.dag, wl.model, wl.estimated_nd, solver)
    result = tune(wl.dag, wl.model, wl.estimated_nd, cands, solver)
    front = aggregate(result.effective, method, even_weights(solver.n_weights))
    rec = wun_recommend(front, weights)
    _emit({
        "method": method.value,
        "weights": list(weights),
        "front": [[sig(v) for v in o] for o in front.objectives],
        "recommendation": _solution_dict(rec),
    }, args.out)
    return 0


def cmd_bench(args) -> int:
    cfg = BenchConfig.from_dict(load_yaml(args.config))
    out_dir = Path(args.out or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)
    report = run_benchmark(cfg)
    write_report(report, out_dir / "report.json", "json")
    write_report(report, out_dir / "report.csv", "csv")
    print(f"wrote {len(report.rows)} rows to {out_dir}")
    return 0


def cmd_simulate(args) -> int:
    wl, solver = _workload_and_solver(args.workload)
    scenario = Scenario.from_dict(load_yaml(args.scenario))
    true_nd, est_nd = scenario.apply(wl)
    cands = generate_candidates(wl.dag, wl.model, est_nd, solver)
    result = tune(wl.dag, wl.model, est_nd, cands, solver)
    front = aggregate(result.effective, args.method, even_weights(solver.n_weights))
    rec = wun_recommend(front, scenario.weights)
    policy = RuntimePolicy(prune=scenario.prune, weights=scenario.weights,
                           adaptive=scenario.adaptive)
    trace = simulate(wl.dag, wl.model, true_nd, est_nd, policy, rec.theta_c, rec.theta_p,
                     rec.theta_s, cands.plan_samples)
    payload = {k: sig(v) if isinstance(v, float) else v for k, v in trace.summary().items()}
    payload["compile_time"] = [sig(v) for v in rec.objectives]
    payload["join_algorithms"] = trace.snapshots[-1]["join_algo"]
    _emit(payload, args.out)
    return 0


def cmd_oracle(args) -> int:
    wl, solver = _workload_and_solver(args.workload)
    cands = generate_candidates(wl.dag, wl.model, wl.estimated_nd, solver)
    front = brute_force_front(wl.dag, wl.model, wl.estimated_nd, cands.theta_cs,
                              cands.plan_samples, limit=args.limit)
    _emit({"front": [[sig(v) for v in o] for o in front.objectives]}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="tune one workload and recommend a configuration")
    p.add_argument("--workload", required=True)
    p.add_argument("--method", default="HMOOC3", help="HMOOC1, HMOOC2 or HMOOC3")
    p.add_argument("--weights", default="0.5,0.5", help="latency,cost preference")
    p.add_argument("--out", help="JSON output file (default: stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark config and write report.json/csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", help="replay the recommended plan under runtime re-optimization")
    p.add_argument("--workload", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--method", default="HMOOC3")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="brute-force Pareto front over the sampled candidates")
    p.add_argument("--workload", required=True)
    p.add_argument("--limit", type=int, default=2_000_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
