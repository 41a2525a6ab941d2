"""Event replay of compile-time plans under runtime re-optimization.

SubQs execute in topological order. When a subQ finishes, parents whose inputs
are now all materialized learn their true input cardinality; the runtime may
then send optimization requests that re-pick the parent's plan parameters with
the context configuration held fixed. Join algorithms only move forward along
SMJ -> SHJ -> BHJ.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import ConfigVector, ContractError, normalize_array
from .costmodel import JoinAlgo, NonDecision, Role, select_join
from .hmooc import QueryDAG, check_weights

BROADCAST_FLOOR_MB = 25.0
SHUFFLE_HASH_FLOOR_MB = 0.0


def aggregate_theta_p(theta_ps: Sequence[ConfigVector], dag: QueryDAG, space,
                      base: ConfigVector | None = None,
                      broadcast_floor: float = BROADCAST_FLOOR_MB,
                      hash_floor: float = SHUFFLE_HASH_FLOOR_MB) -> ConfigVector:
    """Collapse per-subQ plan parameters into the single copy used at submission.

    Join thresholds take the smallest value among join subQs, floored; with no
    joins they keep the space defaults. Other parameters come from ``base``
    (normally the latency-extreme solution's first subQ).
    """
    if len(theta_ps) != len(dag):
        raise ContractError("one plan configuration per subQ is required")
    base = base if base is not None else theta_ps[0]
    coords = list(base.coords)
    s4, s3 = space.index("s4"), space.index("s3")
    joins = dag.join_ids
    if joins:
        coords[s4] = max(min(theta_ps[i].coords[s4] for i in joins), broadcast_floor)
        coords[s3] = max(min(theta_ps[i].coords[s3] for i in joins), hash_floor)
    else:
        coords[s4] = space.dims[s4].default
        coords[s3] = space.dims[s3].default
    # floors may fall between grid values; the submitted copy is not a grid point
    return ConfigVector(space.name, tuple(float(c) for c in coords))


def join_select(build_side_mb: float, thresholds, current_algo=JoinAlgo.NONE) -> JoinAlgo:
    """``thresholds`` is ``(s4, s3)``: broadcast and shuffled-hash limits in MB."""
    s4, s3 = thresholds
    return select_join(build_side_mb, s4, s3, JoinAlgo(current_algo))


class EventKind(str, enum.Enum):
    COLLAPSED_PLAN = "collapsed_plan"
    QUERY_STAGE = "query_stage"


@dataclass(frozen=True)
class RequestEvent:
    kind: EventKind
    subq: int
    has_join: bool = False
    all_join_inputs_known: bool = False
    is_scan_based: bool = False
    input_bytes: float = 0.0
    s1_target_bytes: float = 0.0


def should_send_request(event: RequestEvent) -> bool:
    if event.kind is EventKind.COLLAPSED_PLAN:
        return event.has_join and event.all_join_inputs_known
    return (not event.is_scan_based) and event.input_bytes > event.s1_target_bytes


@dataclass(frozen=True)
class RuntimePolicy:
    prune: bool = True
    weights: tuple = (0.5, 0.5)
    adaptive: bool = True     # False replays the compile-time plan with no requests
    broadcast_floor: float = BROADCAST_FLOOR_MB
    hash_floor: float = SHUFFLE_HASH_FLOOR_MB

    def __post_init__(self):
        object.__setattr__(self, "weights", check_weights(self.weights))


@dataclass
class RuntimeState:
    theta_c: ConfigVector
    theta_p: list                 # per subQ, the plan parameters it will run with
    theta_s: list
    join_algo: list               # per subQ JoinAlgo; NONE for non-joins
    known_alpha: list             # best-known input cardinality per subQ
    basis_alpha: list             # cardinality the current plan was chosen for
    completed: list = field(default_factory=list)
    requests_sent: int = 0
    requests_pruned: int = 0
    plan_changes: int = 0
    clock: float = 0.0
    cost: float = 0.0
    realized: list = field(default_factory=list)   # (subq, latency, cost)
    algo_history: list = field(default_factory=list)

    def copy(self) -> "RuntimeState":
        return replace(
            self, theta_p=list(self.theta_p), theta_s=list(self.theta_s),
            join_algo=list(self.join_algo), known_alpha=list(self.known_alpha),
            basis_alpha=list(self.basis_alpha), completed=list(self.completed),
            realized=list(self.realized), algo_history=[list(h) for h in self.algo_history],
        )

    def snapshot(self) -> dict:
        return {
            "completed": list(self.completed),
            "theta_p": [list(p.coords) for p in self.theta_p],
            "join_algo": [JoinAlgo(a).name for a in self.join_algo],
            "clock": self.clock,
        }


@dataclass
class Simulator:
    """Holds the fixed inputs of one simulation; ``step`` advances a state."""

    dag: QueryDAG
    model: object
    estimated: NonDecision
    plan_candidates: list           # per subQ list of (theta_p, theta_s)
    policy: RuntimePolicy = field(default_factory=RuntimePolicy)

    def _stats(self, state: RuntimeState, i: int) -> NonDecision:
        return self.estimated.with_alpha(i, state.known_alpha[i])

    def _thresholds(self, theta_p: ConfigVector) -> tuple[float, float]:
        space = self.model.spaces[1]
        return theta_p.coords[space.index("s4")], theta_p.coords[space.index("s3")]

    def initial_state(self, theta_c: ConfigVector, theta_ps, theta_ss) -> RuntimeState:
        m = len(self.dag)
        if len(theta_ps) != m or len(theta_ss) != m:
            raise ContractError("compile-time plan must cover every subQ")
        if self.policy.adaptive:
            submitted = aggregate_theta_p(theta_ps, self.dag, self.model.spaces[1],
                                          base=theta_ps[0],
                                          broadcast_floor=self.policy.broadcast_floor,
                                          hash_floor=self.policy.hash_floor)
            plan = [submitted] * m
        else:
            plan = list(theta_ps)
        algos = []
        for i, q in enumerate(self.dag):
            if q.role is Role.JOIN:
                b = self.model.build_mb(i, self.estimated.alpha[i])
                algos.append(join_select(b, self._thresholds(plan[i])))
            else:
                algos.append(JoinAlgo.NONE)
        state = RuntimeState(theta_c, plan, list(theta_ss), algos,
                             list(self.estimated.alpha), list(self.estimated.alpha))
        state.algo_history.append(list(algos))
        if self.policy.adaptive:
            for i, q in enumerate(self.dag):
                if not q.children:
                    self._handle(state, self._stage_event(state, i))
        return state

    def _stage_event(self, state: RuntimeState, i: int) -> RequestEvent:
        q = self.dag.subqs[i]
        s1 = state.theta_p[i].coords[self.model.spaces[1].index("s1")]
        return RequestEvent(EventKind.QUERY_STAGE, i,
                            is_scan_based=q.role is Role.SCAN or not q.children,
                            input_bytes=self.model.input_mb(i, state.known_alpha[i]) * 2 ** 20,
                            s1_target_bytes=s1 * 2 ** 20)

    def _handle(self, state: RuntimeState, event: RequestEvent) -> None:
        if self.policy.prune and not should_send_request(event):
            state.requests_pruned += 1
            return
        state.requests_sent += 1
        self._reoptimize(state, event.subq)

    def _reoptimize(self, state: RuntimeState, i: int) -> None:
        if state.known_alpha[i] == state.basis_alpha[i]:
            return  # no new statistics since the plan was chosen
        state.basis_alpha[i] = state.known_alpha[i]
        pairs = self.plan_candidates[i]
        c_space, p_space, s_space = self.model.spaces
        P = p_space.as_array([p for p, _ in pairs])
        S = s_space.as_array([s for _, s in pairs])
        C = np.repeat([state.theta_c.coords], len(pairs), axis=0)
        nd = self._stats(state, i)
        floor = state.join_algo[i]
        objs = self.model.predict_batch(i, C, P, S, nd, join_floor=floor)
        score = normalize_array(objs) @ np.asarray(self.policy.weights)
        j = int(np.lexsort((np.arange(len(objs)), objs[:, 1], objs[:, 0], score))[0])
        new_p, new_s = pairs[j]
        if (new_p, new_s) != (state.theta_p[i], state.theta_s[i]):
            state.plan_changes += 1
        state.theta_p[i], state.theta_s[i] = new_p, new_s
        if self.dag.subqs[i].role is Role.JOIN:
            b = self.model.build_mb(i, state.known_alpha[i])
            algo = join_select(b, self._thresholds(new_p), state.join_algo[i])
            if algo != state.join_algo[i]:
                state.plan_changes += 1
            state.join_algo[i] = algo

    def realized(self, state: RuntimeState, i: int, true_nd: NonDecision) -> tuple:
        c_space, p_space, s_space = self.model.spaces
        algo = state.join_algo[i] if self.dag.subqs[i].role is Role.JOIN else None
        row = self.model.predict_batch(i, [state.theta_c.coords], [state.theta_p[i].coords],
                                       [state.theta_s[i].coords], true_nd, join_algo=algo)[0]
        return float(row[0]), float(row[1])

    def step(self, state: RuntimeState, completed_subq: int,
             true_nd: NonDecision) -> RuntimeState:
        m = len(self.dag)
        if not 0 <= completed_subq < m:
            raise ContractError(f"unknown subQ {completed_subq}")
        if completed_subq in state.completed:
            raise ContractError(f"subQ {completed_subq} already completed")
        state = state.copy()
        lat, cost = self.realized(state, completed_subq, true_nd)
        state.clock += lat
        state.cost += cost
        state.realized.append((completed_subq, lat, cost))
        state.completed.append(completed_subq)
        state.known_alpha[completed_subq] = true_nd.alpha[completed_subq]
        if self.policy.adaptive:
            done = set(state.completed)
            for r in self.dag.parents(completed_subq):
                if r in done:
                    continue
                q = self.dag.subqs[r]
                ready = all(c in done for c in q.children)
                if ready:
                    state.known_alpha[r] = true_nd.alpha[r]
                self._handle(state, RequestEvent(
                    EventKind.COLLAPSED_PLAN, r, has_join=q.role is Role.JOIN,
                    all_join_inputs_known=ready))
                if ready:
                    self._handle(state, self._stage_event(state, r))
        state.algo_history.append(list(state.join_algo))
        return state


@dataclass
class Trace:
    latency: float
    cost: float
    requests_sent: int
    requests_pruned: int
    plan_changes: int
    snapshots: list
    algo_history: list
    realized: list

    @property
    def pruned_fraction(self) -> float:
        total = self.requests_sent + self.requests_pruned
        return self.requests_pruned / total if total else 0.0

    def summary(self) -> dict:
        return {
            "latency": self.latency, "cost": self.cost,
            "requests_sent": self.requests_sent, "requests_pruned": self.requests_pruned,
            "plan_changes": self.plan_changes,
        }


def simulate(dag: QueryDAG, model, true_nd: NonDecision, estimated_nd: NonDecision,
             policy: RuntimePolicy, theta_c: ConfigVector, theta_ps, theta_ss,
             plan_candidates) -> Trace:
    """Replay the query in topological order and return the realized totals.

    ``plan_candidates`` is the pool the runtime optimizer may pick from: one
    shared list of ``(theta_p, theta_s)`` pairs or one list per subQ.
    """
    m = len(dag)
    if plan_candidates and isinstance(plan_candidates[0], tuple):
        plan_candidates = [list(plan_candidates)] * m
    if len(plan_candidates) != m:
        raise ContractError("plan candidates must cover every subQ")
    sim = Simulator(dag, model, estimated_nd, [list(c) for c in plan_candidates], policy)
    state = sim.initial_state(theta_c, list(theta_ps), list(theta_ss))
    snapshots = [state.snapshot()]
    for q in dag:
        state = sim.step(state, q.id, true_nd)
        snapshots.append(state.snapshot())
    return Trace(state.clock, state.cost, state.requests_sent, state.requests_pruned,
                 state.plan_changes, snapshots, state.algo_history, state.realized)
