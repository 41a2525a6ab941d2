import math

import numpy as np
import pytest

from qtune.core import ConfigSpace, ConfigVector, ContractError, Group, Kind, ParamDef, pareto_filter
from qtune.costmodel import (
    RESOLUTION,
    CostModel,
    FisReport,
    JoinAlgo,
    NonDecision,
    Role,
    SubQConstants,
    fis_filter,
    permutation_fis,
    predict_query,
    predict_subq,
    quantize,
    select_join,
)
from qtune.harness.workload import WorkloadSpec, gen_workload
from qtune.hmooc import QueryDAG, SubQ, brute_force_front
from qtune.sampling import sample_random

REF_GOLDEN = (874536.7451782227, 273292.7654571533)


def ref_model():
    return CostModel((SubQConstants(work=1.0, shuffle_bytes_per_row=100.0, base_overhead=1.0),))


def with_coords(space, vec, **updates):
    coords = list(vec.coords)
    for k, v in updates.items():
        coords[space.index(k)] = float(v)
    return ConfigVector(space.name, tuple(coords))


def test_reference_workload_golden():
    m = ref_model()
    c, p, s = m.spaces
    got = predict_subq(m, 0, c.default(), p.default(), s.default(), NonDecision((1e6,)))
    assert got == REF_GOLDEN


def test_reference_workload_hand_formula():
    # independent re-derivation from the closed form with plain floats
    d_mb = 1e6 * 100 / 2 ** 20
    g_p = 1 + 0.05 * math.log2(64 * 200 / d_mb) ** 2
    work = 1e6 * g_p / 4
    shuffle = 1e8 / 2 ** 30 * 0.7
    partition = 0.25 * abs(math.log2(d_mb))
    latency = work + shuffle + partition + 1.0
    cost = latency * (0.0625 * 4 + 0.0078125 * 8) + 0.5 * 1e8 / 2 ** 30 * 0.7
    assert REF_GOLDEN[0] == pytest.approx(latency, abs=RESOLUTION)
    assert REF_GOLDEN[1] == pytest.approx(cost, abs=2 * RESOLUTION)


def test_doubling_cores_halves_work_term():
    m = ref_model()
    c, p, s = m.spaces
    nd = NonDecision((1e6,))
    base = m.terms(0, [c.default().coords], [p.default().coords], [s.default().coords], nd)
    more = with_coords(c, c.default(), k1=4)
    doubled = m.terms(0, [more.coords], [p.default().coords], [s.default().coords], nd)
    assert doubled["work"][0] * 2 == base["work"][0]


def test_contention_doubles_latency():
    m = ref_model()
    c, p, s = m.spaces
    a = predict_subq(m, 0, c.default(), p.default(), s.default(), NonDecision((1e6,), gamma=0))
    b = predict_subq(m, 0, c.default(), p.default(), s.default(), NonDecision((1e6,), gamma=1))
    assert b[0] == 2 * a[0]


def test_latency_decreases_and_rate_increases_with_cores():
    m = ref_model()
    c, p, s = m.spaces
    nd = NonDecision((1e6,))
    prev_lat, prev_rate = math.inf, -math.inf
    for k1 in (1, 2, 4, 8):
        vec = with_coords(c, c.default(), k1=k1)
        lat, _ = predict_subq(m, 0, vec, p.default(), s.default(), nd)
        rate = m.terms(0, [vec.coords], [p.default().coords], [s.default().coords], nd)["rate"][0]
        assert lat < prev_lat and rate > prev_rate
        prev_lat, prev_rate = lat, rate


def test_wrong_space_rejected():
    m = ref_model()
    c, p, s = m.spaces
    with pytest.raises(ContractError):
        predict_subq(m, 0, p.default(), c.default(), s.default(), NonDecision((1e6,)))
    with pytest.raises(ContractError):
        predict_subq(m, 0, ConfigVector("theta_c", (1.0,)), p.default(), s.default(),
                     NonDecision((1e6,)))


def test_nondecision_validation():
    with pytest.raises(ContractError):
        NonDecision((0.0,))
    with pytest.raises(ContractError):
        NonDecision((1.0,), beta=((0, -1, 0),))
    with pytest.raises(ContractError):
        NonDecision((1.0,), gamma=-1)
    assert NonDecision((1.0, 2.0)).beta == ((0, 0, 0), (0, 0, 0))


def test_predict_query_sum_examples():
    q = SubQConstants(work=2e-7, shuffle_bytes_per_row=20, base_overhead=0.5)
    one = CostModel((q,))
    two = CostModel((q, q))
    c, p, s = one.spaces
    nd1, nd2 = NonDecision((1e7,)), NonDecision((1e7, 1e7))
    single = predict_subq(one, 0, c.default(), p.default(), s.default(), nd1)
    dag1 = QueryDAG((SubQ(0),))
    assert predict_query(one, dag1, c.default(), [p.default()], [s.default()], nd1) == single
    dag2 = QueryDAG((SubQ(0), SubQ(1)))
    both = predict_query(two, dag2, c.default(), [p.default()] * 2, [s.default()] * 2, nd2)
    assert both == (2 * single[0], 2 * single[1])
    with pytest.raises(ContractError):
        predict_query(two, dag2, c.default(), [p.default()], [s.default()] * 2, nd2)


def test_predict_query_equals_summation_oracle():
    wl = gen_workload(WorkloadSpec(seed=3, m=3, join_fraction=0.5))
    c, p, s = wl.model.spaces
    rng = np.random.default_rng(0)
    for _ in range(20):
        tc = sample_random(c, 1, int(rng.integers(1 << 30)))[0]
        tps = sample_random(p, 3, int(rng.integers(1 << 30)))
        tss = sample_random(s, 3, int(rng.integers(1 << 30)))
        total = predict_query(wl.model, wl.dag, tc, tps, tss, wl.true_nd)
        parts = [predict_subq(wl.model, i, tc, tps[i], tss[i], wl.true_nd) for i in range(3)]
        assert total == (sum(x[0] for x in parts), sum(x[1] for x in parts))


def test_outputs_on_dyadic_grid_and_finite():
    wl = gen_workload(WorkloadSpec(seed=5, m=6, join_fraction=0.5))
    c, p, s = wl.model.spaces
    C = c.as_array(sample_random(c, 50, 1))
    P = p.as_array(sample_random(p, 50, 2))
    S = s.as_array(sample_random(s, 50, 3))
    for i in range(6):
        out = wl.model.predict_batch(i, C, P, S, wl.true_nd)
        assert np.all(np.isfinite(out)) and np.all(out >= 0)
        assert np.array_equal(quantize(out), out)


def test_deterministic():
    wl1 = gen_workload(WorkloadSpec(seed=9, m=4))
    wl2 = gen_workload(WorkloadSpec(seed=9, m=4))
    c, p, s = wl1.model.spaces
    a = wl1.model.predict_batch(2, [c.default().coords], [p.default().coords],
                                [s.default().coords], wl1.true_nd)
    b = wl2.model.predict_batch(2, [c.default().coords], [p.default().coords],
                                [s.default().coords], wl2.true_nd)
    assert a.tobytes() == b.tobytes()


def test_join_selection_in_model():
    q = SubQConstants(work=1e-7, shuffle_bytes_per_row=20, base_overhead=0.1,
                      build_bytes_per_row=10.0, role=Role.JOIN)
    m = CostModel((q,))
    c, p, s = m.spaces
    nd = NonDecision((1e6,))     # build side about 9.5 MB
    P_small = with_coords(p, p.default(), s4=0, s3=0)
    P_big = with_coords(p, p.default(), s4=25)
    t1 = m.terms(0, [c.default().coords], [P_small.coords], [s.default().coords], nd)
    t2 = m.terms(0, [c.default().coords], [P_big.coords], [s.default().coords], nd)
    assert t1["algo"][0] == JoinAlgo.SMJ and t2["algo"][0] == JoinAlgo.BHJ
    t3 = m.terms(0, [c.default().coords], [P_small.coords], [s.default().coords], nd,
                 join_floor=JoinAlgo.SHJ)
    assert t3["algo"][0] == JoinAlgo.SHJ
    assert t2["shuffle"][0] == 0.0


def test_select_join_rules():
    assert select_join(8, 10, 0) is JoinAlgo.BHJ
    assert select_join(50, 25, 64) is JoinAlgo.SHJ
    assert select_join(50, 25, 0, JoinAlgo.SMJ) is JoinAlgo.SMJ
    assert select_join(4608, 10, 0, JoinAlgo.BHJ) is JoinAlgo.BHJ
    with pytest.raises(ContractError):
        select_join(-1, 10, 0)


def test_pareto_tradeoff_on_100_instances():
    for seed in range(100):
        wl = gen_workload(WorkloadSpec(seed=seed, m=2, join_fraction=0.5))
        c, p, s = wl.model.spaces
        theta_cs = sample_random(c, 12, seed)
        plans = [(p.default(), s.default())]
        front = brute_force_front(wl.dag, wl.model, wl.estimated_nd, theta_cs, plans)
        assert len(front) >= 2, seed


# -- FIS ----------------------------------------------------------------------


def toy_space(n):
    return ConfigSpace("t", Group.CONTEXT, tuple(
        ParamDef(f"x{j}", Kind.INT, tuple(range(1, 11)), 1) for j in range(n)))


def test_fis_ignored_parameter_is_zero_and_dropped():
    space = toy_space(3)

    def resp(X):
        return np.column_stack([X[:, 0] + 2 * X[:, 1], X[:, 0]])

    rep = permutation_fis(resp, space, 200, seed=0)
    assert rep.score_of("x2") < 1e-9
    assert rep.scores[0] > 0 and rep.scores[1] > 0
    assert rep.keep_mask == (True, True, False)
    assert sum(rep.normalized) == pytest.approx(1.0)


def test_fis_linear_parameter_positive():
    space = toy_space(1)
    rep = permutation_fis(lambda X: np.column_stack([3 * X[:, 0]]), space, 50, seed=1)
    assert rep.scores[0] > 0


def test_fis_symmetric_parameters_equal_within_10pct():
    space = toy_space(2)
    rep = permutation_fis(lambda X: np.column_stack([X[:, 0] + X[:, 1]]), space, 10_000, seed=2)
    a, b = rep.scores
    assert abs(a - b) / max(a, b) < 0.10


def test_fis_deterministic_and_sample_floor():
    space = toy_space(2)
    f = lambda X: np.column_stack([X[:, 0] * X[:, 1]])
    assert permutation_fis(f, space, 100, 5) == permutation_fis(f, space, 100, 5)
    with pytest.raises(ContractError):
        permutation_fis(f, space, 49, 0)


def test_fis_unused_dims_of_cost_model_are_zero():
    wl = gen_workload(WorkloadSpec(seed=1, m=3))
    c, p, s = wl.model.spaces

    def resp(X):
        n = len(X)
        P = np.repeat([p.default().coords], n, axis=0)
        S = np.repeat([s.default().coords], n, axis=0)
        return sum(wl.model.predict_batch(i, X, P, S, wl.true_nd) for i in range(3))

    rep = permutation_fis(resp, c, 200, 0)
    for name in ("k4", "k5", "k6", "k8"):
        assert rep.score_of(name) == 0.0
        assert not rep.keep_mask[c.index(name)]


def report(scores, important=None):
    n = len(scores)
    return FisReport(tuple(f"p{j}" for j in range(n)), tuple(scores), tuple(scores),
                     tuple(important or [False] * n), tuple([True] * n))


def test_fis_filter_examples():
    assert fis_filter(report((0.6, 0.3, 0.07, 0.03)), 0.05) == (True, True, True, False)
    assert fis_filter(report((0.6, 0.3, 0.07, 0.03)), 0.0) == (True,) * 4
    assert fis_filter(report((0.25,) * 4), 0.05) == (True,) * 4


def test_fis_filter_never_drops_important():
    rep = report((0.6, 0.3, 0.07, 0.03), important=[False, False, False, True])
    assert fis_filter(rep, 0.05) == (True,) * 4
    with pytest.raises(ContractError):
        fis_filter(rep, 1.0)


def test_join_monotone_cost_model_brute_force_respects_pareto():
    wl = gen_workload(WorkloadSpec(seed=11, m=3, join_fraction=0.6))
    c, p, s = wl.model.spaces
    theta_cs = sample_random(c, 4, 0)
    plans = list(zip(sample_random(p, 3, 1), sample_random(s, 3, 2)))
    front = brute_force_front(wl.dag, wl.model, wl.estimated_nd, theta_cs, plans)
    assert front.objectives == pareto_filter(front.objectives).objectives
