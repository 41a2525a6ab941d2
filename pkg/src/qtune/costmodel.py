"""Synthetic analytic per-subQ models and permutation feature importance.

The closed form stands in for learned latency/cost regressors. Per subQ ``i``::

    latency = (1 + gamma) * [ work + shuffle + join + partition_penalty + overhead ]
    work    = W_i * alpha_i * g_p / (k1 * k3)
    g_p     = 1 + curvature * log2(s1 * s5 / D_i) ** 2
    shuffle = S_i * (1 + skew_ratio) * compress / BW        (0 under BHJ)
    partition_penalty = penalty * |log2(eff_partitions / p*_i)|
    cost    = latency * (cpu_rate * k1 * k3 + mem_rate * k2 * k3) + shuffle_rate * S_i * compress

``D_i`` is the subQ input in MB, ``p*_i = max(1, D_i / partition_target_mb)`` and
``eff_partitions = min(s5, max(1, D_i / s11))`` (coalescing). Both objectives are
rounded to a dyadic grid so sums of subQ objectives are exact in any order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import ConfigSpace, ConfigVector, ContractError, Group, Kind, ParamDef

RESOLUTION = 2.0 ** -16
MB_PER_GB = 1024.0


class Role(str, enum.Enum):
    SCAN = "scan"
    JOIN = "join"
    OTHER = "other"


class JoinAlgo(enum.IntEnum):
    NONE = 0
    SMJ = 1
    SHJ = 2
    BHJ = 3


def quantize(x):
    return np.round(np.asarray(x, dtype=float) / RESOLUTION) * RESOLUTION


def default_spaces() -> tuple[ConfigSpace, ConfigSpace, ConfigSpace]:
    """Context, plan and stage spaces with Spark-like parameters and grids."""
    context = ConfigSpace("theta_c", Group.CONTEXT, (
        ParamDef("k1", Kind.INT, (1, 2, 3, 4, 5, 6, 7, 8), 2),          # executor.cores
        ParamDef("k2", Kind.INT, (1, 2, 4, 8, 16), 4),                  # executor.memory GB
        ParamDef("k3", Kind.INT, (1, 2, 3, 4, 6, 8, 12, 16), 2),        # executor.instances
        ParamDef("k4", Kind.INT, (8, 16, 32, 64, 128), 32),             # default.parallelism
        ParamDef("k5", Kind.INT, (24, 48, 96), 48),                     # reducer.maxSizeInFlight MB
        ParamDef("k6", Kind.INT, (100, 200, 400), 200),                 # bypassMergeThreshold
        ParamDef("k7", Kind.BOOL, (0, 1), 1),                           # shuffle.compress
        ParamDef("k8", Kind.FLOAT, (0.5, 0.6, 0.7, 0.8), 0.6),          # memory.fraction
    ))
    plan = ConfigSpace("theta_p", Group.PLAN, (
        ParamDef("s1", Kind.INT, (16, 32, 64, 128, 256), 64, important=True),
        ParamDef("s2", Kind.FLOAT, (0.05, 0.1, 0.2, 0.4), 0.2, important=True),
        ParamDef("s3", Kind.INT, (0, 16, 64, 256), 0, important=True),
        ParamDef("s4", Kind.INT, (0, 10, 25, 50, 100, 200), 10, important=True),
        ParamDef("s5", Kind.INT, (25, 50, 100, 200, 400, 800), 200),
        ParamDef("s6", Kind.INT, (64, 128, 256, 512), 256),
        ParamDef("s7", Kind.INT, (2, 5, 10), 5),
        ParamDef("s8", Kind.INT, (32, 64, 128, 256), 128),
    ))
    stage = ConfigSpace("theta_s", Group.STAGE, (
        ParamDef("s10", Kind.FLOAT, (0.1, 0.2, 0.3, 0.5), 0.2),
        ParamDef("s11", Kind.INT, (1, 2, 4, 8, 16), 1),
    ))
    return context, plan, stage


@dataclass(frozen=True)
class SubQConstants:
    work: float                      # task-seconds per row before partition effects
    shuffle_bytes_per_row: float     # bytes shuffled per input row
    base_overhead: float             # seconds
    input_bytes_per_row: float = 100.0
    build_bytes_per_row: float = 0.0  # join build side; 0 for non-joins
    role: Role = Role.SCAN

    def __post_init__(self):
        if min(self.work, self.shuffle_bytes_per_row, self.base_overhead,
               self.input_bytes_per_row) <= 0:
            raise ContractError("subQ constants must be positive")
        if self.build_bytes_per_row < 0:
            raise ContractError("build_bytes_per_row must be non-negative")


@dataclass(frozen=True)
class Price:
    cpu_rate: float = 0.0625      # per core-second
    mem_rate: float = 0.0078125   # per GB-second
    shuffle_rate: float = 0.5     # per GB


@dataclass(frozen=True)
class ModelConstants:
    bandwidth_gb_s: float = 1.0
    compress_ratio: float = 0.7
    curvature: float = 0.05
    penalty: float = 0.25
    partition_target_mb: float = 128.0
    broadcast_s_per_mb: float = 0.05
    hash_s_per_mb: float = 0.002
    sort_s_per_mb: float = 0.004


@dataclass(frozen=True)
class NonDecision:
    """Non-decision inputs: per-subQ cardinality and skew, query-level contention."""

    alpha: tuple
    beta: tuple = ()
    gamma: float = 0.0

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        beta = self.beta or tuple((0.0, 0.0, 0.0) for _ in alpha)
        beta = tuple(tuple(float(x) for x in b) for b in beta)
        object.__setattr__(self, "beta", beta)
        if any(a <= 0 for a in alpha):
            raise ContractError("alpha must be positive")
        if len(beta) != len(alpha) or any(len(b) != 3 or min(b) < 0 for b in beta):
            raise ContractError("beta must hold three non-negative ratios per subQ")
        if self.gamma < 0:
            raise ContractError("gamma must be non-negative")

    def with_alpha(self, i: int, value: float) -> "NonDecision":
        alpha = list(self.alpha)
        alpha[i] = float(value)
        return replace(self, alpha=tuple(alpha))


@dataclass(frozen=True)
class CostModel:
    subqs: tuple
    price: Price = field(default_factory=Price)
    constants: ModelConstants = field(default_factory=ModelConstants)
    spaces: tuple = field(default_factory=default_spaces)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subqs", tuple(self.subqs))
        c, p, s = self.spaces
        object.__setattr__(self, "_cols", {
            "k1": c.index("k1"), "k2": c.index("k2"), "k3": c.index("k3"),
            "k7": c.index("k7"),
            "s1": p.index("s1"), "s3": p.index("s3"), "s4": p.index("s4"),
            "s5": p.index("s5"), "s11": s.index("s11"),
        })

    @property
    def m(self) -> int:
        return len(self.subqs)

    def build_mb(self, i: int, alpha: float) -> float:
        return alpha * self.subqs[i].build_bytes_per_row / 2 ** 20

    def input_mb(self, i: int, alpha: float) -> float:
        return alpha * self.subqs[i].input_bytes_per_row / 2 ** 20

    def terms(self, i, C, P, S, nd: NonDecision, join_algo=None,
              join_floor=JoinAlgo.NONE) -> dict:
        """Unrounded latency components and cost rate for a batch of configs.

        ``join_algo`` forces the join algorithm; otherwise it is chosen from the
        build-side size and the s3/s4 thresholds, never below ``join_floor``.
        """
        if not 0 <= i < self.m:
            raise ContractError(f"unknown subQ {i}")
        C, P, S = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (C, P, S))
        cols = self._cols
        q = self.subqs[i]
        k = self.constants
        alpha = nd.alpha[i]
        skew = nd.beta[i][1]
        cores = C[:, cols["k1"]] * C[:, cols["k3"]]
        memory = C[:, cols["k2"]] * C[:, cols["k3"]]
        compress = np.where(C[:, cols["k7"]] > 0, k.compress_ratio, 1.0)
        d_mb = self.input_mb(i, alpha)
        s1, s5 = P[:, cols["s1"]], P[:, cols["s5"]]
        g_p = 1.0 + k.curvature * np.log2(s1 * s5 / d_mb) ** 2
        work = q.work * alpha * g_p / cores
        shuffle_gb = alpha * q.shuffle_bytes_per_row / 2 ** 30
        shuffle = shuffle_gb * (1.0 + skew) * compress / k.bandwidth_gb_s
        p_star = max(1.0, d_mb / k.partition_target_mb)
        eff_parts = np.minimum(s5, np.maximum(1.0, d_mb / S[:, cols["s11"]]))
        partition = k.penalty * np.abs(np.log2(eff_parts / p_star))
        join = np.zeros_like(work)
        algo = np.zeros(len(work), dtype=int)
        if q.role is Role.JOIN:
            b_mb = self.build_mb(i, alpha)
            if join_algo is not None and join_algo is not JoinAlgo.NONE:
                algo = np.full(len(work), int(join_algo))
            else:
                algo = np.where(b_mb <= P[:, cols["s4"]], int(JoinAlgo.BHJ),
                                np.where(b_mb <= P[:, cols["s3"]], int(JoinAlgo.SHJ),
                                         int(JoinAlgo.SMJ)))
                algo = np.maximum(algo, int(join_floor))
            b_shuffle = b_mb / MB_PER_GB / k.bandwidth_gb_s
            bhj = k.broadcast_s_per_mb * b_mb
            shj = b_shuffle + k.hash_s_per_mb * b_mb / cores
            smj = b_shuffle + k.sort_s_per_mb * (b_mb + shuffle_gb * MB_PER_GB) / cores
            join = np.select([algo == JoinAlgo.BHJ, algo == JoinAlgo.SHJ], [bhj, shj], smj)
            # the probe side is not shuffled under a broadcast join
            shuffle = np.where(algo == JoinAlgo.BHJ, 0.0, shuffle)
        rate = self.price.cpu_rate * cores + self.price.mem_rate * memory
        return {
            "work": work, "shuffle": shuffle, "join": join, "partition": partition,
            "overhead": np.full_like(work, q.base_overhead), "contention": 1.0 + nd.gamma,
            "rate": rate, "shuffle_cost": self.price.shuffle_rate * shuffle_gb * compress,
            "algo": algo,
        }

    def predict_batch(self, i, C, P, S, nd: NonDecision, join_algo=None,
                      join_floor=JoinAlgo.NONE) -> np.ndarray:
        """(n, 2) array of (latency, cost) for n configuration rows of subQ ``i``."""
        t = self.terms(i, C, P, S, nd, join_algo, join_floor)
        bracket = quantize(t["work"] + t["shuffle"] + t["join"] + t["partition"] + t["overhead"])
        latency = quantize(t["contention"] * bracket)
        cost = quantize(latency * t["rate"] + t["shuffle_cost"])
        return np.column_stack([latency, cost])


def select_join(build_mb: float, s4: float, s3: float,
                current: JoinAlgo = JoinAlgo.NONE) -> JoinAlgo:
    """Size-based join choice that never moves back along SMJ < SHJ < BHJ."""
    if build_mb < 0:
        raise ContractError(f"negative build-side size {build_mb}")
    if build_mb <= s4:
        candidate = JoinAlgo.BHJ
    elif build_mb <= s3:
        candidate = JoinAlgo.SHJ
    else:
        candidate = JoinAlgo.SMJ
    return JoinAlgo(max(int(candidate), int(current)))


def _check(space: ConfigSpace, vec: ConfigVector) -> None:
    if vec.space_id != space.name:
        raise ContractError(f"config from space {vec.space_id!r}, expected {space.name!r}")
    if len(vec.coords) != space.d:
        raise ContractError(f"config length {len(vec.coords)} != {space.d}")


def predict_subq(model, i: int, theta_c: ConfigVector, theta_p: ConfigVector,
                 theta_s: ConfigVector, nd: NonDecision, join_algo=None) -> tuple:
    c, p, s = model.spaces
    _check(c, theta_c)
    _check(p, theta_p)
    _check(s, theta_s)
    row = model.predict_batch(i, [theta_c.coords], [theta_p.coords], [theta_s.coords], nd,
                              join_algo)[0]
    return tuple(float(v) for v in row)


def predict_query(model, dag, theta_c: ConfigVector, theta_ps: Sequence[ConfigVector],
                  theta_ss: Sequence[ConfigVector], nd: NonDecision) -> tuple:
    m = len(dag)
    if len(theta_ps) != m or len(theta_ss) != m:
        raise ContractError(
            f"need {m} plan/stage configs, got {len(theta_ps)}/{len(theta_ss)}"
        )
    total = np.zeros(2)
    for i in range(m):
        total += predict_subq(model, i, theta_c, theta_ps[i], theta_ss[i], nd)
    return tuple(float(v) for v in total)


class TabularModel:
    """A model given by an explicit objective function, for constructed instances.

    ``fn(i, C, P, S, nd)`` must return an (n, 2) array.
    """

    def __init__(self, spaces, m: int, fn: Callable):
        self.spaces = tuple(spaces)
        self.m = m
        self._fn = fn

    def predict_batch(self, i, C, P, S, nd, join_algo=None, join_floor=JoinAlgo.NONE):
        if not 0 <= i < self.m:
            raise ContractError(f"unknown subQ {i}")
        C, P, S = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (C, P, S))
        return np.asarray(self._fn(i, C, P, S, nd), dtype=float).reshape(len(C), -1)


# ---------------------------------------------------------------------------
# permutation feature importance


@dataclass(frozen=True)
class FisReport:
    names: tuple
    scores: tuple
    normalized: tuple
    important: tuple
    keep_mask: tuple

    def score_of(self, name: str) -> float:
        return self.scores[self.names.index(name)]


def permutation_fis(response: Callable[[np.ndarray], np.ndarray], space: ConfigSpace,
                    n_samples: int, seed: int, threshold: float = 0.05) -> FisReport:
    """Shuffle one parameter column at a time and measure the relative error.

    ``response`` maps an (n, d) coordinate matrix over ``space`` to (n, k)
    predictions. The design is a Latin hypercube over the grid.
    """
    from .sampling import lhs_indices

    if n_samples < 50:
        raise ContractError("permutation_fis needs n_samples >= 50")
    rng = np.random.default_rng(seed)
    idx = lhs_indices([len(d.values) for d in space.dims], n_samples, rng)
    X = np.column_stack([np.asarray(d.values)[idx[:, j]] for j, d in enumerate(space.dims)])
    base = np.asarray(response(X), dtype=float).reshape(n_samples, -1)
    denom = np.where(np.abs(base) > 0, np.abs(base), 1.0)
    scores = []
    for j in range(space.d):
        Xs = X.copy()
        Xs[:, j] = X[rng.permutation(n_samples), j]
        shuffled = np.asarray(response(Xs), dtype=float).reshape(n_samples, -1)
        scores.append(float(np.mean(np.abs(shuffled - base) / denom)))
    total = sum(scores)
    normalized = tuple(s / total for s in scores) if total > 0 else tuple(0.0 for _ in scores)
    important = tuple(d.important for d in space.dims)
    report = FisReport(tuple(space.names), tuple(scores), normalized, important,
                       tuple(True for _ in scores))
    return replace(report, keep_mask=fis_filter(report, threshold))


def fis_filter(report: FisReport, cumulative_threshold: float = 0.05) -> tuple:
    """Drop the low-importance tail whose cumulative normalized score is below the threshold."""
    if not 0 <= cumulative_threshold < 1:
        raise ContractError("threshold must lie in [0, 1)")
    n = len(report.normalized)
    keep = [True] * n
    if sum(report.normalized) == 0:
        return tuple(keep)
    # ascending by score; ties broken toward dropping later parameters first
    order = sorted(range(n), key=lambda j: (report.normalized[j], -j))
    tail = 0.0
    for j in order:
        tail += report.normalized[j]
        if tail >= cumulative_threshold:
            break
        if not report.important[j]:
            keep[j] = False
    return tuple(keep)
