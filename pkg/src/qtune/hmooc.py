"""Hierarchical multi-objective tuning under a shared context configuration.

Pipeline: sample candidates, tune every subQ per context candidate (keeping the
subQ-level Pareto set), then compose subQ fronts into query-level fronts with
one of three aggregation methods, and finally recommend one point with WUN.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    ConfigVector,
    ContractError,
    ParetoSet,
    Solution,
    normalize_array,
    objectives_of,
    pareto_filter,
    pareto_indices,
)
from .costmodel import NonDecision, Role, permutation_fis
from .sampling import (
    ClusterModel,
    SampleBudget,
    choose_budget,
    cluster_thetac,
    crossover_enrich,
    draw,
    joint_space,
    sample_random,
    split_joint,
)

# ---------------------------------------------------------------------------
# workload structure


@dataclass(frozen=True)
class SubQ:
    id: int
    role: Role = Role.SCAN
    children: tuple = ()


@dataclass(frozen=True)
class QueryDAG:
    """SubQs listed in topological order; ``subqs[i].id == i``."""

    subqs: tuple

    def __post_init__(self):
        object.__setattr__(self, "subqs", tuple(self.subqs))
        if not self.subqs:
            raise ContractError("a query needs at least one subQ")
        for i, q in enumerate(self.subqs):
            if q.id != i:
                raise ContractError(f"subQ at position {i} has id {q.id}")
            for c in q.children:
                if not 0 <= c < i:
                    raise ContractError(
                        f"subQ {i} has child {c}; children must precede parents"
                    )

    def __len__(self):
        return len(self.subqs)

    def __iter__(self):
        return iter(self.subqs)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(c, q.id) for q in self.subqs for c in q.children]

    def parents(self, i: int) -> list[int]:
        return [q.id for q in self.subqs if i in q.children]

    @property
    def join_ids(self) -> list[int]:
        return [q.id for q in self.subqs if q.role is Role.JOIN]


class PlanEntry(NamedTuple):
    theta_p: ConfigVector
    theta_s: ConfigVector
    objectives: tuple


class EffectiveSet:
    """For each context candidate, the per-subQ nondominated plan entries."""

    def __init__(self, m: int):
        self.m = m
        self.fronts: dict[ConfigVector, list[list[PlanEntry]]] = {}

    def __contains__(self, theta_c) -> bool:
        return theta_c in self.fronts

    def __len__(self):
        return len(self.fronts)

    @property
    def theta_cs(self) -> list[ConfigVector]:
        return list(self.fronts)

    def add(self, theta_c: ConfigVector, per_subq: Sequence[Sequence[PlanEntry]]) -> None:
        per_subq = [list(e) for e in per_subq]
        if len(per_subq) != self.m:
            raise ContractError(f"need entries for {self.m} subQs, got {len(per_subq)}")
        if any(not e for e in per_subq):
            raise ContractError("every subQ needs at least one entry")
        self.fronts[theta_c] = per_subq

    def objective_arrays(self, theta_c: ConfigVector) -> list[np.ndarray]:
        return [np.array([e.objectives for e in entries], dtype=float)
                for entries in self.fronts[theta_c]]

    def copy(self) -> "EffectiveSet":
        out = EffectiveSet(self.m)
        out.fronts = {k: [list(e) for e in v] for k, v in self.fronts.items()}
        return out


def even_weights(n: int, k: int = 2) -> list[tuple]:
    """``n`` evenly spaced weight vectors for two objectives; one vector is (0.5, 0.5)."""
    if k != 2:
        raise ContractError("evenly spaced weights are generated for k = 2")
    if n < 1:
        raise ContractError("need at least one weight vector")
    if n == 1:
        return [(0.5, 0.5)]
    return [(i / (n - 1), 1.0 - i / (n - 1)) for i in range(n)]


def check_weights(w: Sequence[float]) -> tuple:
    w = tuple(float(x) for x in w)
    if any(x < 0 for x in w) or not math.isclose(sum(w), 1.0, abs_tol=1e-9):
        raise ContractError(f"weights must be non-negative and sum to 1, got {w}")
    return w


# ---------------------------------------------------------------------------
# subQ tuning


def _normalize_plan_samples(plan_samples, m: int) -> list[list[tuple]]:
    if not plan_samples:
        raise ContractError("no plan samples")
    first = plan_samples[0]
    if isinstance(first, tuple) and len(first) == 2 and isinstance(first[0], ConfigVector):
        return [list(plan_samples) for _ in range(m)]
    if len(plan_samples) != m:
        raise ContractError(f"need plan samples for {m} subQs")
    return [list(s) for s in plan_samples]


def _front_entries(model, i, theta_c, pairs, nd) -> list[PlanEntry]:
    c_space, p_space, s_space = model.spaces
    P = p_space.as_array([p for p, _ in pairs])
    S = s_space.as_array([s for _, s in pairs])
    C = np.repeat(np.array([theta_c.coords], dtype=float), len(pairs), axis=0)
    objs = model.predict_batch(i, C, P, S, nd)
    keep = pareto_indices(objs)
    return [PlanEntry(pairs[j][0], pairs[j][1], tuple(float(v) for v in objs[j]))
            for j in keep]


def subq_tune(dag: QueryDAG, model, theta_c_reps: Sequence[ConfigVector], plan_samples,
              nd: NonDecision) -> EffectiveSet:
    """Evaluate every plan sample per (context representative, subQ) and keep the front."""
    if not theta_c_reps:
        raise ContractError("no context candidates")
    per_subq = _normalize_plan_samples(plan_samples, len(dag))
    eff = EffectiveSet(len(dag))
    for theta_c in theta_c_reps:
        if theta_c in eff:
            continue
        eff.add(theta_c, [_front_entries(model, i, theta_c, per_subq[i], nd)
                          for i in range(len(dag))])
    return eff


def _inherit(eff: EffectiveSet, dag, model, nd, rep: ConfigVector, member: ConfigVector):
    fronts = []
    for i in range(len(dag)):
        pairs = [(e.theta_p, e.theta_s) for e in eff.fronts[rep][i]]
        fronts.append(_front_entries(model, i, member, pairs, nd))
    return fronts


def assign_opt_p(effective: EffectiveSet, cluster: ClusterModel,
                 all_candidates: Sequence[ConfigVector], dag: QueryDAG, model,
                 nd: NonDecision) -> EffectiveSet:
    """Give each cluster member its representative's optimal plans, re-predicted."""
    out = effective.copy()
    if len(cluster.assignment) != len(all_candidates):
        raise ContractError("cluster assignment does not cover all candidates")
    for idx, cand in enumerate(all_candidates):
        if cand in out:
            continue
        rep = all_candidates[cluster.representative_of(idx)]
        if rep not in effective:
            raise ContractError(f"representative of candidate {idx} was not tuned")
        out.add(cand, _inherit(effective, dag, model, nd, rep, cand))
    return out


def enrich_and_extend(effective: EffectiveSet, new_candidates: Sequence[ConfigVector],
                      cluster: ClusterModel, all_candidates: Sequence[ConfigVector],
                      dag: QueryDAG, model, nd: NonDecision) -> EffectiveSet:
    """Add new context candidates via their nearest representative's plans."""
    out = effective.copy()
    for cand in new_candidates:
        if cand in out:
            continue
        c = cluster.nearest(all_candidates, cand.coords)
        rep = all_candidates[cluster.representatives[c]]
        out.add(cand, _inherit(effective, dag, model, nd, rep, cand))
    return out


def locally_optimal_thetac(effective: EffectiveSet) -> list[ConfigVector]:
    """Context candidates on some subQ's front when pooling all candidates."""
    keys = effective.theta_cs
    found: dict[ConfigVector, None] = {}
    for i in range(effective.m):
        owners, objs = [], []
        for key in keys:
            for e in effective.fronts[key][i]:
                owners.append(key)
                objs.append(e.objectives)
        for j in pareto_indices(np.array(objs)):
            found.setdefault(owners[j], None)
    return [k for k in keys if k in found]


# ---------------------------------------------------------------------------
# DAG aggregation over subQ fronts (one context candidate)


class Composite(NamedTuple):
    objectives: np.ndarray   # (n, k), canonical order
    choices: np.ndarray      # (n, m), index into each subQ's input list


def _arrays(fronts) -> list[np.ndarray]:
    arrays = [np.atleast_2d(np.asarray([objectives_of(p) for p in f], dtype=float))
              for f in fronts]
    if not arrays:
        raise ContractError("need at least one subQ front")
    if any(a.shape[0] == 0 for a in arrays):
        raise ContractError("empty subQ front")
    return arrays


_MERGE_CHUNK = 1 << 21


def merge_fronts(a: Composite, b: Composite) -> Composite:
    """Pareto front of all pairwise sums of two fronts."""
    ao, ac = a
    bo, bc = b
    nb = len(bo)
    rows = max(1, _MERGE_CHUNK // nb)
    parts_o, parts_c = [], []
    for start in range(0, len(ao), rows):
        block = ao[start:start + rows]
        sums = (block[:, None, :] + bo[None, :, :]).reshape(-1, ao.shape[1])
        keep = pareto_indices(sums)
        ia, ib = np.divmod(keep, nb)
        parts_o.append(sums[keep])
        parts_c.append(np.hstack([ac[start + ia], bc[ib]]))
    objs = np.vstack(parts_o)
    choices = np.vstack(parts_c)
    if len(parts_o) > 1:
        keep = pareto_indices(objs)
        objs, choices = objs[keep], choices[keep]
    return Composite(objs, choices)


def divide_conquer_front(fronts) -> Composite:
    """Full Pareto front of the sum composition, by balanced recursive merging."""
    arrays = _arrays(fronts)

    def rec(lo: int, hi: int) -> Composite:
        if hi - lo == 1:
            idx = pareto_indices(arrays[lo])
            return Composite(arrays[lo][idx], idx[:, None])
        mid = (lo + hi) // 2
        return merge_fronts(rec(lo, mid), rec(mid, hi))

    return rec(0, len(arrays))


def ws_points(fronts, weights) -> Composite:
    """One composed point per weight vector (unfiltered, in weight order).

    Each subQ front is shifted by its own minimum and all subQs share one scale
    per objective, the sum of the per-subQ ranges. A shared scale makes the
    per-subQ choices minimize one weighted sum of the composed objectives.
    """
    arrays = _arrays(fronts)
    k = arrays[0].shape[1]
    orders = [pareto_order(a) for a in arrays]
    scale = sum(a.max(axis=0) - a.min(axis=0) for a in arrays)
    safe = np.where(scale > 0, scale, 1.0)
    shifted = []
    for a, order in zip(arrays, orders):
        z = (a[order] - a.min(axis=0)) / safe
        z[:, scale == 0] = 0.0
        shifted.append(z)
    objs, choices = [], []
    for w in weights:
        w = np.asarray(check_weights(w))
        if len(w) != k:
            raise ContractError(f"weight vector has {len(w)} entries for {k} objectives")
        pick = []
        for z, order in zip(shifted, orders):
            pick.append(int(order[int(np.argmin(z @ w))]))
        choices.append(pick)
        objs.append(sum(a[j] for a, j in zip(arrays, pick)))
    return Composite(np.array(objs, dtype=float), np.array(choices, dtype=np.int64))


def ws_front(fronts, weights) -> Composite:
    pts = ws_points(fronts, weights)
    keep = pareto_indices(pts.objectives)
    return Composite(pts.objectives[keep], pts.choices[keep])


def boundary_front(fronts) -> Composite:
    """The per-objective extreme points of the composition."""
    arrays = _arrays(fronts)
    k = arrays[0].shape[1]
    objs, choices = [], []
    for j in range(k):
        others = [o for o in range(k) if o != j]
        pick = []
        for a in arrays:
            keys = [np.arange(len(a))] + [a[:, o] for o in reversed(others)] + [a[:, j]]
            pick.append(int(np.lexsort(keys)[0]))
        choices.append(pick)
        objs.append(sum(a[i] for a, i in zip(arrays, pick)))
    objs = np.array(objs, dtype=float)
    keep = pareto_indices(objs)
    return Composite(objs[keep], np.array(choices, dtype=np.int64)[keep])


def pareto_order(a: np.ndarray) -> np.ndarray:
    """Canonical (lexicographic, stable) order of all rows."""
    return np.lexsort(tuple(a[:, j] for j in reversed(range(a.shape[1]))))


def _to_solutions(effective: EffectiveSet, theta_c, comp: Composite) -> list[Solution]:
    entries = effective.fronts[theta_c]
    out = []
    for obj, choice in zip(comp.objectives, comp.choices):
        picked = [entries[i][j] for i, j in enumerate(choice)]
        out.append(Solution(tuple(obj), theta_c,
                            tuple(e.theta_p for e in picked),
                            tuple(e.theta_s for e in picked)))
    return out


def agg_divide_conquer(effective: EffectiveSet, theta_c) -> ParetoSet:
    comp = divide_conquer_front(effective.objective_arrays(theta_c))
    return ParetoSet(_to_solutions(effective, theta_c, comp))


def agg_ws(effective: EffectiveSet, theta_c, weights) -> ParetoSet:
    comp = ws_front(effective.objective_arrays(theta_c), weights)
    return ParetoSet(_to_solutions(effective, theta_c, comp))


def agg_boundary(effective: EffectiveSet, theta_c) -> ParetoSet:
    comp = boundary_front(effective.objective_arrays(theta_c))
    return ParetoSet(_to_solutions(effective, theta_c, comp))


# ---------------------------------------------------------------------------
# end-to-end


class Method(str, enum.Enum):
    HMOOC1 = "HMOOC1"
    HMOOC2 = "HMOOC2"
    HMOOC3 = "HMOOC3"


def aggregate(effective: EffectiveSet, method, weights=None) -> ParetoSet:
    """Per-context aggregation, then the union across contexts filtered."""
    method = Method(method)
    if weights is None:
        weights = even_weights(11)
    pool: list[Solution] = []
    for theta_c in effective.theta_cs:
        if method is Method.HMOOC1:
            part = agg_divide_conquer(effective, theta_c)
        elif method is Method.HMOOC2:
            part = agg_ws(effective, theta_c, weights)
        else:
            part = agg_boundary(effective, theta_c)
        pool.extend(part)
    return pareto_filter(pool)


@dataclass
class SolverConfig:
    sampler: str = "grid"             # grid | lhs | random
    budget: SampleBudget | None = None
    clusters: int | None = None       # default min(10, n_c)
    tune_all: bool = False            # every context candidate is its own representative
    crossover: bool = True
    crossover_location: int = 3
    max_new: int | None = None        # cap on crossover additions, default n_c
    fis_threshold: float | None = 0.05
    fis_samples: int = 200
    n_weights: int = 11
    seed: int = 0
    latency_threshold: float = 10.0
    budget_high: tuple = (54, 81)
    budget_low: tuple = (27, 54)
    objective_bounds: list | None = None   # [(lo, hi), ...] per objective; validated, not used


@dataclass
class Candidates:
    theta_cs: list
    plan_samples: list               # (theta_p, theta_s) pairs shared by all subQs
    budget: SampleBudget
    fis_c: object = None
    fis_p: object = None


@dataclass
class TuningResult:
    effective: EffectiveSet
    candidates: Candidates
    cluster: ClusterModel | None = None
    added: list = field(default_factory=list)


def default_prediction(dag, model, nd) -> tuple:
    c, p, s = model.spaces
    C, P, S = [c.default().coords], [p.default().coords], [s.default().coords]
    total = np.zeros(2)
    for i in range(len(dag)):
        total += model.predict_batch(i, C, P, S, nd)[0]
    return tuple(float(v) for v in total)


def _query_response(dag, model, nd, which: str):
    c_space, p_space, s_space = model.spaces

    def response(X):
        n = len(X)
        C = np.repeat([c_space.default().coords], n, axis=0)
        P = np.repeat([p_space.default().coords], n, axis=0)
        S = np.repeat([s_space.default().coords], n, axis=0)
        if which == "c":
            C = X
        else:
            P, S = X[:, :p_space.d], X[:, p_space.d:]
        return sum(model.predict_batch(i, C, P, S, nd) for i in range(len(dag)))

    return response


def generate_candidates(dag: QueryDAG, model, nd: NonDecision,
                        config: SolverConfig) -> Candidates:
    c_space, p_space, s_space = model.spaces
    jspace = joint_space(p_space, s_space)
    budget = config.budget or choose_budget(
        default_prediction(dag, model, nd)[0], config.latency_threshold,
        config.budget_high, config.budget_low)
    fis_c = fis_p = None
    keep_c = keep_p = None
    if config.fis_threshold is not None:
        fis_c = permutation_fis(_query_response(dag, model, nd, "c"), c_space,
                                config.fis_samples, config.seed, config.fis_threshold)
        fis_p = permutation_fis(_query_response(dag, model, nd, "p"), jspace,
                                config.fis_samples, config.seed + 1, config.fis_threshold)
        keep_c, keep_p = fis_c.keep_mask, fis_p.keep_mask
    theta_cs = draw(c_space, budget.n_c, config.sampler, config.seed, fis_c, keep_c)
    joint = draw(jspace, budget.n_p, config.sampler, config.seed + 7, fis_p, keep_p)
    theta_cs = list(dict.fromkeys(theta_cs))
    plan_samples = list(dict.fromkeys(split_joint(joint, p_space, s_space)))
    return Candidates(theta_cs, plan_samples, budget, fis_c, fis_p)


def tune(dag: QueryDAG, model, nd: NonDecision, candidates: Candidates,
         config: SolverConfig) -> TuningResult:
    """SubQ tuning with clustering, inheritance and crossover enrichment."""
    theta_cs = candidates.theta_cs
    n_c = len(theta_cs)
    if config.tune_all:
        C = n_c
    else:
        C = min(config.clusters or min(10, n_c), n_c)
    cluster = cluster_thetac(theta_cs, C, config.seed)
    reps = [theta_cs[r] for r in cluster.representatives]
    eff = subq_tune(dag, model, reps, candidates.plan_samples, nd)
    eff = assign_opt_p(eff, cluster, theta_cs, dag, model, nd)
    added: list[ConfigVector] = []
    d_c = model.spaces[0].d
    if config.crossover and d_c > 1:
        loc = min(max(config.crossover_location, 1), d_c - 1)
        parents = locally_optimal_thetac(eff)
        fresh = [c for c in crossover_enrich(parents, loc) if c not in eff]
        cap = config.max_new if config.max_new is not None else n_c
        if len(fresh) > cap:
            rng = np.random.default_rng(config.seed + 13)
            pick = np.sort(rng.choice(len(fresh), size=cap, replace=False))
            fresh = [fresh[i] for i in pick]
        if config.tune_all:
            tuned = subq_tune(dag, model, fresh, candidates.plan_samples, nd) if fresh else None
            if tuned is not None:
                for key in tuned.theta_cs:
                    eff.add(key, tuned.fronts[key])
        else:
            eff = enrich_and_extend(eff, fresh, cluster, theta_cs, dag, model, nd)
        added = fresh
    return TuningResult(eff, candidates, cluster, added)


def check_bounds(bounds) -> None:
    if bounds is None:
        return
    for pair in bounds:
        lo, hi = pair
        if not lo <= hi:
            raise ContractError(f"objective bound {pair} has lo > hi")


def solve(dag: QueryDAG, model, nd: NonDecision, method="HMOOC3",
          config: SolverConfig | None = None, weights=None) -> ParetoSet:
    config = config or SolverConfig()
    check_bounds(config.objective_bounds)
    cands = generate_candidates(dag, model, nd, config)
    result = tune(dag, model, nd, cands, config)
    return aggregate(result.effective, method, weights or even_weights(config.n_weights))


# ---------------------------------------------------------------------------
# recommendation and baselines


def wun_recommend(front, weights) -> object:
    """Entry nearest the Utopia point under weighted, min-max normalized distance."""
    entries = list(front)
    if not entries:
        raise ContractError("cannot recommend from an empty front")
    w = np.asarray(check_weights(weights))
    arr = np.array([objectives_of(e) for e in entries], dtype=float)
    if len(w) != arr.shape[1]:
        raise ContractError("weight vector length does not match objectives")
    dist = np.sqrt((((normalize_array(arr)) * w) ** 2).sum(axis=1))
    best = np.flatnonzero(dist == dist.min())
    # ties go to the lowest objective-1 entry
    j = min(best, key=lambda i: tuple(arr[i]))
    return entries[int(j)]


def wun_distances(front, weights) -> np.ndarray:
    w = np.asarray(check_weights(weights))
    arr = np.array([objectives_of(e) for e in front], dtype=float)
    return np.sqrt(((normalize_array(arr) * w) ** 2).sum(axis=1))


def draw_global_samples(dag: QueryDAG, model, n: int, seed: int):
    """``n`` joint samples: one context draw plus independent plan draws per subQ."""
    c_space, p_space, s_space = model.spaces
    jspace = joint_space(p_space, s_space)
    theta_cs = sample_random(c_space, n, seed)
    per_subq = [split_joint(sample_random(jspace, n, seed + 1 + i), p_space, s_space)
                for i in range(len(dag))]
    return [(theta_cs[r], [per_subq[i][r] for i in range(len(dag))]) for r in range(n)]


def evaluate_samples(dag, model, nd, samples) -> np.ndarray:
    c_space, p_space, s_space = model.spaces
    C = c_space.as_array([s[0] for s in samples])
    total = np.zeros((len(samples), 2))
    for i in range(len(dag)):
        P = p_space.as_array([s[1][i][0] for s in samples])
        S = s_space.as_array([s[1][i][1] for s in samples])
        total += model.predict_batch(i, C, P, S, nd)
    return total


def baseline_ws(dag: QueryDAG, model, nd: NonDecision, weights, global_samples,
                seed: int = 0) -> list[Solution]:
    """Weighted-sum baseline over joint samples; one weight is the single-objective case.

    ``global_samples`` is a count or an explicit list of ``(theta_c, [(theta_p,
    theta_s), ...])`` samples.
    """
    if isinstance(global_samples, int):
        samples = draw_global_samples(dag, model, global_samples, seed)
    else:
        samples = list(global_samples)
    if not samples:
        raise ContractError("no samples")
    objs = evaluate_samples(dag, model, nd, samples)
    norm = normalize_array(objs)
    out = []
    for w in weights:
        w = np.asarray(check_weights(w))
        score = norm @ w
        j = int(np.lexsort((np.arange(len(objs)), objs[:, 1], objs[:, 0], score))[0])
        theta_c, plans = samples[j]
        out.append(Solution(tuple(objs[j]), theta_c, tuple(p for p, _ in plans),
                            tuple(s for _, s in plans)))
    return out


def distinct_count(solutions: Sequence[Solution]) -> int:
    return len(set(solutions))


def brute_force_front(dag: QueryDAG, model, nd: NonDecision, theta_cs, plan_samples,
                      limit: int = 2_000_000) -> ParetoSet:
    """Exhaustive enumeration over context candidates and per-subQ plan choices."""
    import itertools

    per_subq = _normalize_plan_samples(plan_samples, len(dag))
    combos = math.prod(len(s) for s in per_subq) * len(theta_cs)
    if combos > limit:
        raise ContractError(f"{combos} combinations exceed the oracle limit {limit}")
    c_space, p_space, s_space = model.spaces
    pool = []
    for theta_c in theta_cs:
        objs = []
        for i in range(len(dag)):
            pairs = per_subq[i]
            C = np.repeat([theta_c.coords], len(pairs), axis=0)
            objs.append(model.predict_batch(i, C, p_space.as_array([p for p, _ in pairs]),
                                            s_space.as_array([s for _, s in pairs]), nd))
        for pick in itertools.product(*(range(len(s)) for s in per_subq)):
            total = np.zeros(2)
            for i, j in enumerate(pick):
                total = total + objs[i][j]
            pool.append(Solution(tuple(total), theta_c,
                                 tuple(per_subq[i][j][0] for i, j in enumerate(pick)),
                                 tuple(per_subq[i][j][1] for i, j in enumerate(pick))))
    return pareto_filter(pool)
