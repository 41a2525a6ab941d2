import zlib

import numpy as np
import pytest

from qtune.core import ConfigSpace, Group, Kind, ParamDef
from qtune.costmodel import TabularModel
from qtune.hmooc import QueryDAG, SubQ


def small_spaces():
    """Three-dimension spaces, small enough to enumerate."""
    c = ConfigSpace("c", Group.CONTEXT, (
        ParamDef("a", Kind.INT, (1, 2, 3, 4), 1),
        ParamDef("b", Kind.INT, (1, 2, 3), 2),
        ParamDef("z", Kind.BOOL, (0, 1), 0),
    ))
    p = ConfigSpace("p", Group.PLAN, (
        ParamDef("x", Kind.INT, (1, 2, 3, 4), 2, important=True),
        ParamDef("y", Kind.INT, (1, 2), 1),
    ))
    s = ConfigSpace("s", Group.STAGE, (ParamDef("u", Kind.INT, (1, 2, 3), 1),))
    return c, p, s


def hashed_model(seed: int, m: int, spaces=None, high: int = 64) -> TabularModel:
    """Objectives are small integers hashed from (seed, subQ, configuration).

    Integers keep every sum exact, and hashing makes the table consistent no
    matter which order configurations are evaluated in.
    """
    spaces = spaces or small_spaces()

    def fn(i, C, P, S, nd):
        out = np.empty((len(C), 2))
        for r in range(len(C)):
            key = repr((seed, i, tuple(C[r]), tuple(P[r]), tuple(S[r]))).encode()
            h = zlib.crc32(key)
            out[r] = (h % high, (h // high) % high)
        return out

    return TabularModel(spaces, m, fn)


def chain_dag(m: int) -> QueryDAG:
    return QueryDAG(tuple(SubQ(i, children=(i - 1,) if i else ()) for i in range(m)))


def random_front(rng, n: int, scale: int = 1000) -> np.ndarray:
    """``n`` mutually nondominated integer points (x increasing, y decreasing)."""
    xs = np.sort(rng.choice(scale, size=n, replace=False))
    ys = np.sort(rng.choice(scale, size=n, replace=False))[::-1]
    return np.column_stack([xs, ys]).astype(float)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report one PASS/FAIL line each in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
