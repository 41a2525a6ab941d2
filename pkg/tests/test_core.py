import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtune.core import (
    ConfigSpace,
    ConfigVector,
    ContractError,
    Group,
    Kind,
    ParamDef,
    Solution,
    dominates,
    hypervolume,
    normalize,
    pareto_filter,
    utopia_nadir,
)

points2 = st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), max_size=60)


def naive_front(pts):
    seen, out = set(), []
    for p in pts:
        if p in seen:
            continue
        if not any(dominates(q, p) for q in pts):
            out.append(p)
            seen.add(p)
    return sorted(out)


# -- spaces -----------------------------------------------------------------


def test_paramdef_validation():
    with pytest.raises(ContractError):
        ParamDef("a", Kind.INT, (), 1)
    with pytest.raises(ContractError):
        ParamDef("a", Kind.INT, (1, 1, 2), 1)
    with pytest.raises(ContractError):
        ParamDef("a", Kind.INT, (1, 2), 3)
    with pytest.raises(ContractError):
        ParamDef("a", Kind.BOOL, (0, 2), 0)
    assert ParamDef("a", Kind.INT, (1, 2, 4), 4).default_index == 2


def test_space_vector_checks():
    space = ConfigSpace("c", Group.CONTEXT, (ParamDef("a", Kind.INT, (1, 2), 1),))
    assert space.vector([2]).coords == (2.0,)
    with pytest.raises(ContractError):
        space.vector([3])
    with pytest.raises(ContractError):
        space.validate(ConfigVector("other", (1.0,)))
    with pytest.raises(ContractError):
        space.validate(ConfigVector("c", (1.0, 2.0)))
    with pytest.raises(ContractError):
        ConfigSpace("c", Group.CONTEXT, (ParamDef("a", Kind.INT, (1,), 1),) * 2)


def test_solution_lengths_must_match():
    with pytest.raises(ContractError):
        Solution((1, 2), None, (1, 2), (1,))


# -- dominance --------------------------------------------------------------


@pytest.mark.parametrize("a,b,expected", [
    ((1, 2), (2, 2), True),
    ((1, 2), (1, 2), False),
    ((1, 3), (3, 1), False),
])
def test_dominates_examples(a, b, expected):
    assert dominates(a, b) is expected


def test_dominates_dimension_mismatch():
    with pytest.raises(ContractError):
        dominates((1, 2), (1, 2, 3))


@given(st.tuples(st.integers(0, 5), st.integers(0, 5)), st.tuples(st.integers(0, 5), st.integers(0, 5)))
def test_dominance_antisymmetric(a, b):
    assert not (dominates(a, b) and dominates(b, a))


# -- filtering --------------------------------------------------------------


def test_pareto_filter_examples():
    pts = [(47, 35), (57, 25), (50, 30), (60, 20), (55, 40)]
    assert pareto_filter(pts).objectives == [(47, 35), (50, 30), (57, 25), (60, 20)]
    assert pareto_filter([(5, 5)]).objectives == [(5, 5)]
    assert pareto_filter([(1, 1), (1, 1)]).objectives == [(1, 1)]
    assert len(pareto_filter([])) == 0


def test_pareto_filter_keeps_first_duplicate():
    a = Solution((1, 1), "first")
    b = Solution((1, 1), "second")
    front = pareto_filter([a, b])
    assert [e.theta_c for e in front] == ["first"]


def test_pareto_filter_general_k():
    pts = [(1, 2, 3), (2, 1, 3), (1, 2, 4), (0, 5, 5), (1, 2, 3)]
    assert pareto_filter(pts).objectives == [(0, 5, 5), (1, 2, 3), (2, 1, 3)]


def test_pareto_filter_mixed_k_rejected():
    with pytest.raises(ContractError):
        pareto_filter([(1, 2), (1, 2, 3)])


@settings(max_examples=200, deadline=None)
@given(points2)
def test_pareto_filter_matches_pairwise_oracle(pts):
    front = pareto_filter(pts).objectives
    assert front == naive_front([tuple(map(float, p)) for p in pts])
    xs = [p[0] for p in front]
    ys = [p[1] for p in front]
    assert all(a < b for a, b in zip(xs, xs[1:]))
    assert all(a > b for a, b in zip(ys, ys[1:]))
    assert pareto_filter(front).objectives == front


def test_pareto_filter_oracle_n200(rng):
    for _ in range(50):
        pts = [tuple(p) for p in rng.integers(0, 100, size=(200, 2)).astype(float)]
        assert pareto_filter(pts).objectives == naive_front(pts)


# -- hypervolume ------------------------------------------------------------


def test_hypervolume_examples():
    assert hypervolume([(0.5, 0.5)], (1, 1)) == 0.25
    assert hypervolume([], (1, 1)) == 0.0
    assert hypervolume([(0.2, 0.4), (0.6, 0.1)], (1, 1)) == pytest.approx(0.60, abs=1e-12)


def test_hypervolume_clips_points_outside_box():
    assert hypervolume([(2, 0.5), (0.5, 2)], (1, 1)) == 0.0
    assert hypervolume([(0.5, 0.5), (2, 0)], (1, 1)) == 0.25


def test_hypervolume_rejects_bad_ref():
    with pytest.raises(ContractError):
        hypervolume([(0, 0)], (1, float("inf")))
    with pytest.raises(ContractError):
        hypervolume([(0, 0, 0)], (1, 1, 1))


def grid_area(pts, ref):
    """Exact union area by coordinate compression."""
    xs = sorted({p[0] for p in pts} | {ref[0]})
    ys = sorted({p[1] for p in pts} | {ref[1]})
    area = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            if any(p[0] <= x0 and p[1] <= y0 for p in pts):
                area += (x1 - x0) * (y1 - y0)
    return area


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=1, max_size=15))
def test_hypervolume_matches_grid_oracle(pts):
    ref = (21, 21)
    assert hypervolume(pts, ref) == grid_area(pts, ref)


@settings(max_examples=100, deadline=None)
@given(points2, points2)
def test_hypervolume_monotone_under_union(a, b):
    ref = (51, 51)
    small = hypervolume(pareto_filter(a), ref)
    big = hypervolume(pareto_filter(a + b), ref)
    assert small <= big


# -- utopia / nadir / normalize ---------------------------------------------


def test_utopia_nadir_examples():
    assert utopia_nadir([(10, 100), (40, 10)]) == ((10, 10), (40, 100))
    assert utopia_nadir([(5, 5)]) == ((5, 5), (5, 5))
    assert utopia_nadir([(1, 9), (2, 8), (3, 7)]) == ((1, 7), (3, 9))
    with pytest.raises(ContractError, match="empty Pareto set"):
        utopia_nadir([])


def test_normalize_examples():
    assert normalize([(10, 100), (40, 10)]) == [(0, 1), (1, 0)]
    assert normalize([(5, 5)]) == [(0, 0)]
    out = normalize([(10, 100), (20, 50), (40, 10)])
    expected = [(0, 1), (1 / 3, 4 / 9), (1, 0)]
    for got, want in zip(out, expected):
        assert got == pytest.approx(want, abs=1e-15)


def test_normalize_does_not_mutate():
    arr = [(1.0, 2.0), (3.0, 4.0)]
    normalize(arr)
    assert arr == [(1.0, 2.0), (3.0, 4.0)]


def test_filter_on_enumerated_grid():
    pts = list(itertools.product(range(4), range(4)))
    assert pareto_filter(pts).objectives == [(0, 0)]
