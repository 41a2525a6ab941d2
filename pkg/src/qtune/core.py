"""Configuration spaces and exact Pareto arithmetic.

Objective vectors are plain tuples of floats and every objective is minimized.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

ObjectiveVector = tuple  # tuple[float, ...]


class ContractError(ValueError):
    """Raised when an operation's precondition is violated."""


class Group(str, enum.Enum):
    CONTEXT = "context"
    PLAN = "plan"
    STAGE = "stage"


class Kind(str, enum.Enum):
    INT = "int"
    FLOAT = "float"
    BOOL = "bool"


@dataclass(frozen=True)
class ParamDef:
    """One tunable parameter on a finite grid.

    ``important`` marks plan-structure parameters; FIS filtering never drops them.
    """

    name: str
    kind: Kind
    values: tuple
    default: float
    important: bool = False

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "default", float(self.default))
        if not vals:
            raise ContractError(f"{self.name}: empty value grid")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ContractError(f"{self.name}: values must be strictly increasing")
        if self.default not in vals:
            raise ContractError(f"{self.name}: default {self.default} not in grid")
        if self.kind is Kind.BOOL and not set(vals) <= {0.0, 1.0}:
            raise ContractError(f"{self.name}: bool grid must be a subset of {{0, 1}}")

    @property
    def default_index(self) -> int:
        return self.values.index(self.default)


@dataclass(frozen=True)
class ConfigVector:
    space_id: str
    coords: tuple

    def __getitem__(self, i):
        return self.coords[i]

    def __len__(self):
        return len(self.coords)


@dataclass(frozen=True)
class ConfigSpace:
    name: str
    group: Group
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ContractError(f"space {self.name}: duplicate parameter names")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def d(self) -> int:
        return len(self.dims)

    def index(self, name: str) -> int:
        for i, dim in enumerate(self.dims):
            if dim.name == name:
                return i
        raise KeyError(f"space {self.name} has no parameter {name!r}")

    def default(self) -> ConfigVector:
        return ConfigVector(self.name, tuple(d.default for d in self.dims))

    def vector(self, coords: Iterable[float]) -> ConfigVector:
        vec = ConfigVector(self.name, tuple(float(c) for c in coords))
        self.validate(vec)
        return vec

    def validate(self, vec: ConfigVector) -> None:
        if vec.space_id != self.name:
            raise ContractError(
                f"config belongs to space {vec.space_id!r}, expected {self.name!r}"
            )
        if len(vec.coords) != self.d:
            raise ContractError(
                f"config has {len(vec.coords)} coords, space {self.name} has {self.d}"
            )
        for c, dim in zip(vec.coords, self.dims):
            if c not in dim.values:
                raise ContractError(f"{dim.name}={c} not on grid {dim.values}")

    def as_array(self, vecs: Sequence[ConfigVector]) -> np.ndarray:
        if not vecs:
            return np.zeros((0, self.d))
        for v in vecs:
            if v.space_id != self.name:
                raise ContractError(
                    f"config belongs to space {v.space_id!r}, expected {self.name!r}"
                )
        return np.array([v.coords for v in vecs], dtype=float).reshape(len(vecs), self.d)

    def from_array(self, arr: np.ndarray) -> list[ConfigVector]:
        return [ConfigVector(self.name, tuple(float(x) for x in row)) for row in arr]


@dataclass(frozen=True)
class Solution:
    """A query-level point together with the configuration that produced it.

    Every subQ shares the single ``theta_c``; ``theta_p`` and ``theta_s`` hold one
    vector per subQ.
    """

    objectives: tuple
    theta_c: Any
    theta_p: tuple = ()
    theta_s: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(float(v) for v in self.objectives))
        object.__setattr__(self, "theta_p", tuple(self.theta_p))
        object.__setattr__(self, "theta_s", tuple(self.theta_s))
        if len(self.theta_p) != len(self.theta_s):
            raise ContractError("theta_p and theta_s must have one entry per subQ")


def objectives_of(item) -> tuple:
    obj = getattr(item, "objectives", item)
    return tuple(float(v) for v in obj)


@dataclass
class ParetoSet:
    """Nondominated entries in canonical order (objective 1, then 2, ...)."""

    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def objectives(self) -> list[tuple]:
        return [objectives_of(e) for e in self.entries]

    def objective_set(self) -> set[tuple]:
        return set(self.objectives)

    def as_array(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 2))
        return np.array(self.objectives, dtype=float)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    if len(a) != len(b):
        raise ContractError(f"dimension mismatch: {len(a)} vs {len(b)}")
    strict = False
    for x, y in zip(a, b):
        if x > y:
            return False
        if x < y:
            strict = True
    return strict


def pareto_indices(objs: np.ndarray) -> np.ndarray:
    """Indices of the nondominated rows of ``objs`` in canonical order.

    Exactly equal rows are deduplicated, keeping the first occurrence.
    """
    objs = np.asarray(objs, dtype=float)
    n = objs.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    k = objs.shape[1]
    # lexsort is stable, so equal rows stay in input order
    order = np.lexsort(tuple(objs[:, j] for j in reversed(range(k))))
    if k == 2:
        second = objs[order, 1]
        prev_min = np.minimum.accumulate(np.concatenate(([np.inf], second[:-1])))
        return order[second < prev_min]
    kept: list[int] = []
    for idx in order:
        row = objs[idx]
        if any(np.all(objs[j] <= row) for j in kept):
            continue
        kept.append(int(idx))
    return np.array(kept, dtype=np.int64)


def pareto_filter(points: Iterable) -> ParetoSet:
    """Nondominated subset of ``points`` (Solutions or raw objective tuples)."""
    pts = list(points)
    if not pts:
        return ParetoSet([])
    objs = [objectives_of(p) for p in pts]
    k = len(objs[0])
    if any(len(o) != k for o in objs):
        raise ContractError("all points must have the same number of objectives")
    idx = pareto_indices(np.array(objs, dtype=float))
    return ParetoSet([pts[i] for i in idx])


def hypervolume(front, ref: Sequence[float]) -> float:
    """Area dominated by a 2-objective front and bounded by ``ref``.

    Points outside the reference box contribute nothing.
    """
    ref = tuple(float(r) for r in ref)
    if len(ref) != 2:
        raise ContractError("hypervolume is defined for two objectives only")
    if not all(math.isfinite(r) for r in ref):
        raise ContractError(f"non-finite reference point {ref}")
    pts = [objectives_of(p) for p in front]
    pts = [p for p in pts if p[0] < ref[0] and p[1] < ref[1]]
    if not pts:
        return 0.0
    pts.sort()
    area = 0.0
    ceiling = ref[1]
    for x, y in pts:
        if y < ceiling:
            area += (ref[0] - x) * (ceiling - y)
            ceiling = y
    return area


def utopia_nadir(front) -> tuple[tuple, tuple]:
    objs = [objectives_of(p) for p in front]
    if not objs:
        raise ContractError("empty Pareto set")
    arr = np.array(objs, dtype=float)
    return tuple(arr.min(axis=0).tolist()), tuple(arr.max(axis=0).tolist())


def normalize(front) -> list[tuple]:
    """Per-objective min-max scaling to [0, 1]; zero-range objectives map to 0."""
    objs = [objectives_of(p) for p in front]
    if not objs:
        return []
    arr = np.array(objs, dtype=float)
    return [tuple(row) for row in normalize_array(arr).tolist()]


def normalize_array(arr: np.ndarray) -> np.ndarray:
    lo = arr.min(axis=0)
    span = arr.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out = (arr - lo) / safe
    out[:, span == 0] = 0.0
    return out
