"""Synthetic workloads and their YAML description."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ..costmodel import CostModel, ModelConstants, NonDecision, Price, Role, SubQConstants
from ..hmooc import QueryDAG, SubQ


class ConfigError(ValueError):
    """A configuration, workload or scenario file is invalid."""


@dataclass(frozen=True)
class WorkloadSpec:
    seed: int = 0
    m: int = 8
    join_fraction: float = 0.3
    alpha_range: tuple = (1e6, 5e7)           # rows, sampled log-uniformly
    work_range: tuple = (2e-8, 2e-7)          # task-seconds per row
    shuffle_bytes_range: tuple = (5.0, 60.0)  # per row
    overhead_range: tuple = (0.2, 2.0)        # seconds
    input_bytes_per_row: float = 100.0
    build_bytes_range: tuple = (0.5, 20.0)    # per row, joins only
    skew_range: tuple = (0.0, 0.5)
    gamma: float = 0.0
    E: float = 2.0                            # estimate = alpha * 2**U[-E, E]
    price: Price = field(default_factory=Price)
    constants: ModelConstants = field(default_factory=ModelConstants)

    def __post_init__(self):
        if int(self.m) < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if not 0.0 <= float(self.join_fraction) <= 1.0:
            raise ConfigError(f"join_fraction must lie in [0, 1], got {self.join_fraction}")
        if self.E < 0 or self.gamma < 0:
            raise ConfigError("E and gamma must be non-negative")
        for name in ("alpha_range", "work_range", "shuffle_bytes_range", "overhead_range",
                     "build_bytes_range", "skew_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))

    @classmethod
    def from_dict(cls, raw: dict | None) -> "WorkloadSpec":
        raw = dict(raw or {})
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown workload keys: {sorted(unknown)}")
        try:
            if "price" in raw:
                raw["price"] = Price(**raw["price"])
            if "constants" in raw:
                raw["constants"] = ModelConstants(**raw["constants"])
            for k, v in raw.items():
                if k.endswith("_range"):
                    raw[k] = tuple(v)
            return cls(**raw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid workload: {exc}") from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out


@dataclass
class Workload:
    spec: WorkloadSpec
    dag: QueryDAG
    model: CostModel
    true_nd: NonDecision
    estimated_nd: NonDecision


def _loguniform(rng, lo, hi):
    if lo == hi:
        return lo
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def gen_workload(spec: WorkloadSpec) -> Workload:
    """Deterministic random DAG and model for ``spec.seed``.

    SubQ 0 is a scan. Later subQs become joins over two unconsumed subQs with
    probability ``join_fraction``, otherwise a unary operator over one or a new scan.
    """
    rng = np.random.default_rng(spec.seed)
    subqs, consts, alphas = [], [], []
    open_ids: list[int] = []
    for i in range(spec.m):
        u = rng.random()
        if i > 0 and u < spec.join_fraction and len(open_ids) >= 2:
            kids = sorted(int(x) for x in rng.choice(open_ids, size=2, replace=False))
            role = Role.JOIN
        elif i > 0 and open_ids and rng.random() < 0.5:
            kids = [int(rng.choice(open_ids))]
            role = Role.OTHER
        else:
            kids = []
            role = Role.SCAN
        for c in kids:
            open_ids.remove(c)
        open_ids.append(i)
        subqs.append(SubQ(i, role, tuple(kids)))
        build = rng.uniform(*spec.build_bytes_range) if role is Role.JOIN else 0.0
        consts.append(SubQConstants(
            work=_loguniform(rng, *spec.work_range),
            shuffle_bytes_per_row=rng.uniform(*spec.shuffle_bytes_range),
            base_overhead=rng.uniform(*spec.overhead_range),
            input_bytes_per_row=spec.input_bytes_per_row,
            build_bytes_per_row=build,
            role=role,
        ))
        alphas.append(_loguniform(rng, *spec.alpha_range))
    beta = tuple((0.0, float(rng.uniform(*spec.skew_range)), 0.0) for _ in range(spec.m))
    err = rng.uniform(-spec.E, spec.E, size=spec.m) if spec.E > 0 else np.zeros(spec.m)
    true_nd = NonDecision(tuple(alphas), beta, spec.gamma)
    est_nd = NonDecision(tuple(float(a * 2.0 ** e) for a, e in zip(alphas, err)), beta,
                         spec.gamma)
    model = CostModel(tuple(consts), spec.price, spec.constants, seed=spec.seed)
    return Workload(spec, QueryDAG(tuple(subqs)), model, true_nd, est_nd)


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_workload(path) -> WorkloadSpec:
    data = load_yaml(path)
    return WorkloadSpec.from_dict(data.get("workload", data))


@dataclass(frozen=True)
class Scenario:
    """True and estimated cardinalities for a runtime simulation.

    Missing lists fall back to the generated workload's values.
    """

    true_alpha: tuple | None = None
    estimated_alpha: tuple | None = None
    weights: tuple = (0.5, 0.5)
    prune: bool = True
    adaptive: bool = True

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        raw = dict(raw.get("scenario", raw))
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        for k in ("true_alpha", "estimated_alpha", "weights"):
            if raw.get(k) is not None:
                raw[k] = tuple(float(x) for x in raw[k])
        return cls(**raw)

    def apply(self, wl: Workload) -> tuple[NonDecision, NonDecision]:
        def build(alpha, fallback):
            if alpha is None:
                return fallback
            if len(alpha) != wl.spec.m:
                raise ConfigError(f"scenario lists {len(alpha)} cardinalities for m={wl.spec.m}")
            try:
                return NonDecision(alpha, fallback.beta, fallback.gamma)
            except ValueError as exc:
                raise ConfigError(f"invalid scenario: {exc}") from exc

        return build(self.true_alpha, wl.true_nd), build(self.estimated_alpha, wl.estimated_nd)
