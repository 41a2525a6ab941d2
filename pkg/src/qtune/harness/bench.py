"""Benchmark orchestration and report emission."""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..core import ContractError, hypervolume, pareto_filter
from ..hmooc import (
    Method,
    SolverConfig,
    aggregate,
    baseline_ws,
    check_bounds,
    check_weights,
    default_prediction,
    distinct_count,
    even_weights,
    generate_candidates,
    tune,
    wun_recommend,
)
from ..runtime import RuntimePolicy, simulate
from ..sampling import SampleBudget
from .workload import ConfigError, WorkloadSpec, gen_workload

SCHEMA_VERSION = 1
METHODS = ("HMOOC1", "HMOOC2", "HMOOC3", "MO-WS", "SO-FW")
REF_SCALE = 1.1

CSV_COLUMNS = (
    "instance", "seed", "method", "hv", "ref_latency", "ref_cost", "solve_ms",
    "front_size", "distinct", "default_latency", "default_cost", "rec_latency",
    "rec_cost", "latency_reduction_pct", "cost_reduction_pct", "rt_latency", "rt_cost",
    "rt_requests_sent", "rt_requests_pruned", "recommendations",
)
TIMING_FIELDS = ("solve_ms",)

_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}


def sig(x: float, digits: int = 9) -> float:
    return float(f"{float(x):.{digits}g}")


def solver_config(raw: dict | None) -> SolverConfig:
    raw = dict(raw or {})
    unknown = set(raw) - _SOLVER_KEYS
    if unknown:
        raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
    try:
        if raw.get("budget") is not None:
            raw["budget"] = SampleBudget(*raw["budget"])
        for k in ("budget_high", "budget_low"):
            if k in raw:
                raw[k] = tuple(raw[k])
        cfg = SolverConfig(**raw)
        check_bounds(cfg.objective_bounds)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver section: {exc}") from exc
    if cfg.sampler not in ("grid", "lhs", "random"):
        raise ConfigError(f"unknown sampler {cfg.sampler!r}")
    return cfg


def solver_dict(cfg: SolverConfig) -> dict:
    out = asdict(cfg)
    if cfg.budget is not None:
        out["budget"] = [cfg.budget.n_c, cfg.budget.n_p]
    for k in ("budget_high", "budget_low"):
        out[k] = list(out[k])
    return out


@dataclass
class BenchConfig:
    methods: tuple = METHODS
    seeds: tuple = (0,)
    weights: tuple = ((0.9, 0.1), (0.5, 0.5), (0.1, 0.9))   # WUN weights to report
    runtime_weights: tuple = (0.5, 0.5)
    n_ws_weights: int = 11
    so_fw_weight: tuple = (0.5, 0.5)
    ws_samples: int | None = None      # joint samples for the baselines; default n_c * n_p
    simulate: bool = True
    workers: int = 1
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        if not self.methods:
            raise ConfigError("no methods configured")
        self.seeds = tuple(int(s) for s in self.seeds)
        try:
            self.weights = tuple(check_weights(w) for w in self.weights)
            self.runtime_weights = check_weights(self.runtime_weights)
            self.so_fw_weight = check_weights(self.so_fw_weight)
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_ws_weights < 1 or self.workers < 1:
            raise ConfigError("n_ws_weights and workers must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchConfig":
        raw = dict(raw or {})
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw["workload"] = WorkloadSpec.from_dict(raw.get("workload"))
        raw["solver"] = solver_config(raw.get("solver"))
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "seeds": list(self.seeds),
            "weights": [list(w) for w in self.weights],
            "runtime_weights": list(self.runtime_weights),
            "n_ws_weights": self.n_ws_weights,
            "so_fw_weight": list(self.so_fw_weight),
            "ws_samples": self.ws_samples,
            "simulate": self.simulate,
            "workers": self.workers,
            "workload": self.workload.to_dict(),
            "solver": solver_dict(self.solver),
        }

    def instance_spec(self, seed: int) -> WorkloadSpec:
        data = self.workload.to_dict()
        data["seed"] = seed
        return WorkloadSpec.from_dict(data)


@dataclass
class BenchmarkReport:
    config: dict
    rows: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "config": self.config, "rows": self.rows}


def _run_cell(cfg: BenchConfig, inst: int, method: str) -> dict:
    """Solve one (instance, method) cell; HV is filled in during the reduction."""
    wl = gen_workload(cfg.instance_spec(cfg.seeds[inst]))
    dag, model, nd = wl.dag, wl.model, wl.estimated_nd
    start = time.perf_counter()
    cands = generate_candidates(dag, model, nd, cfg.solver)
    if method.startswith("HMOOC"):
        result = tune(dag, model, nd, cands, cfg.solver)
        front = aggregate(result.effective, Method(method), even_weights(cfg.solver.n_weights))
        distinct = len(front)
    else:
        weights = even_weights(cfg.n_ws_weights) if method == "MO-WS" else [cfg.so_fw_weight]
        n = cfg.ws_samples or cands.budget.n_c * cands.budget.n_p
        sols = baseline_ws(dag, model, nd, weights, n, seed=cfg.solver.seed)
        distinct = distinct_count(sols)
        front = pareto_filter(sols)
    solve_ms = (time.perf_counter() - start) * 1000.0

    default = default_prediction(dag, model, nd)
    recs = []
    for w in cfg.weights:
        rec = wun_recommend(front, w)
        recs.append((w, rec.objectives))
    rec = wun_recommend(front, cfg.runtime_weights)
    row = {
        "instance": inst, "seed": cfg.seeds[inst], "method": method,
        "solve_ms": solve_ms, "front_size": len(front), "distinct": distinct,
        "default_latency": default[0], "default_cost": default[1],
        "rec_latency": rec.objectives[0], "rec_cost": rec.objectives[1],
        "latency_reduction_pct": 100.0 * (1.0 - rec.objectives[0] / default[0]),
        "cost_reduction_pct": 100.0 * (1.0 - rec.objectives[1] / default[1]),
        "recommendations": [{"weights": list(w), "latency": o[0], "cost": o[1]}
                            for w, o in recs],
        "front": [list(o) for o in front.objectives],
    }
    if cfg.simulate:
        policy = RuntimePolicy(weights=cfg.runtime_weights)
        trace = simulate(dag, model, wl.true_nd, nd, policy, rec.theta_c, rec.theta_p,
                         rec.theta_s, cands.plan_samples)
        row.update(rt_latency=trace.latency, rt_cost=trace.cost,
                   rt_requests_sent=trace.requests_sent,
                   rt_requests_pruned=trace.requests_pruned)
    else:
        row.update(rt_latency=None, rt_cost=None, rt_requests_sent=None,
                   rt_requests_pruned=None)
    return row


def _round(value):
    if isinstance(value, float):
        return sig(value)
    if isinstance(value, list):
        return [_round(v) for v in value]
    if isinstance(value, dict):
        return {k: _round(v) for k, v in value.items()}
    return value


def reference_point(fronts) -> tuple[float, float]:
    pts = np.array([p for f in fronts for p in f], dtype=float)
    if len(pts) == 0:
        raise ContractError("no points to derive a reference point from")
    return tuple(float(v) for v in pts.max(axis=0) * REF_SCALE)


def run_benchmark(config: BenchConfig) -> BenchmarkReport:
    """Every method on every instance, reduced in (instance, method) order."""
    cells = [(i, m) for i in range(len(config.seeds)) for m in config.methods]
    if config.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_cell, config, i, m) for i, m in cells]
            results = [f.result() for f in futures]
    else:
        results = [_run_cell(config, i, m) for i, m in cells]

    rows = []
    by_instance: dict[int, list[dict]] = {}
    for row in results:
        by_instance.setdefault(row["instance"], []).append(row)
    for inst in range(len(config.seeds)):
        group = by_instance.get(inst, [])
        if not group:
            continue
        ref = reference_point([r["front"] for r in group])
        for r in group:
            r["ref_latency"], r["ref_cost"] = ref
            r["hv"] = hypervolume([tuple(p) for p in r["front"]], ref)
            rows.append(_round(r))
    return BenchmarkReport(config.to_dict(), rows)


def write_report(report: BenchmarkReport, path, fmt: str = "json") -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            with path.open("w") as fh:
                json.dump(_round(report.to_dict()), fh, indent=2, sort_keys=True)
                fh.write("\n")
        elif fmt == "csv":
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(CSV_COLUMNS)
                for row in report.rows:
                    writer.writerow([_csv_cell(c, row.get(c)) for c in CSV_COLUMNS])
        else:
            raise ConfigError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def _csv_cell(column: str, value) -> str:
    if value is None:
        return ""
    if column == "recommendations":
        return ";".join(f"{r['weights'][0]:.9g}/{r['weights'][1]:.9g}:"
                        f"{r['latency']:.9g}:{r['cost']:.9g}" for r in value)
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def read_report(path) -> BenchmarkReport:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read report {path}: {exc}") from exc
    return BenchmarkReport(data["config"], data["rows"], data["schema_version"])


def strip_timing(report_dict: dict) -> dict:
    """Copy of a report dict without the nondeterministic timing fields."""
    out = dict(report_dict)
    out["rows"] = [{k: v for k, v in r.items() if k not in TIMING_FIELDS}
                   for r in report_dict["rows"]]
    return out
