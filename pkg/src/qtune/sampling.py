"""Candidate generation over grid configuration spaces."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigSpace, ConfigVector, ContractError, Group, ParamDef


@dataclass(frozen=True)
class SampleBudget:
    n_c: int
    n_p: int

    def __post_init__(self):
        if self.n_c < 1 or self.n_p < 1:
            raise ContractError(f"budget must be positive, got ({self.n_c}, {self.n_p})")


def _keep(space: ConfigSpace, keep) -> list[bool]:
    if keep is None:
        return [True] * space.d
    keep = list(keep)
    if len(keep) != space.d:
        raise ContractError(f"keep mask has {len(keep)} entries, space has {space.d}")
    return keep


def _assemble(space: ConfigSpace, idx: np.ndarray, keep: list[bool]) -> list[ConfigVector]:
    cols = []
    for j, dim in enumerate(space.dims):
        vals = np.asarray(dim.values)
        cols.append(vals[idx[:, j]] if keep[j] else np.full(len(idx), dim.default))
    return space.from_array(np.column_stack(cols))


def sample_random(space: ConfigSpace, n: int, seed: int, keep=None) -> list[ConfigVector]:
    """``n`` i.i.d. uniform grid draws; dims outside ``keep`` stay at their defaults."""
    if n < 1:
        raise ContractError("n must be >= 1")
    keep = _keep(space, keep)
    rng = np.random.default_rng(seed)
    idx = np.column_stack([rng.integers(len(d.values), size=n) for d in space.dims])
    return _assemble(space, idx, keep)


def lhs_indices(levels: Sequence[int], n: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube design in grid-index space.

    Each column places one point in each of ``n`` equal strata of [0, 1) and maps
    it to the grid cell containing it.
    """
    out = np.empty((n, len(levels)), dtype=np.int64)
    for j, L in enumerate(levels):
        u = (rng.permutation(n) + rng.random(n)) / n
        out[:, j] = np.minimum((u * L).astype(np.int64), L - 1)
    return out


def sample_lhs(space: ConfigSpace, n: int, seed: int, keep=None) -> list[ConfigVector]:
    if n < 1:
        raise ContractError("n must be >= 1")
    keep = _keep(space, keep)
    rng = np.random.default_rng(seed)
    idx = lhs_indices([len(d.values) for d in space.dims], n, rng)
    return _assemble(space, idx, keep)


def value_order(dim: ParamDef) -> list[float]:
    """Order in which a dimension's grid values join the adaptive grid.

    Default first, then the extremes, then interior points by repeated bisection
    of the widest remaining index gap.
    """
    vals = dim.values
    picked = [dim.default_index]
    for extreme in (0, len(vals) - 1):
        if extreme not in picked:
            picked.append(extreme)
    while len(picked) < len(vals):
        taken = sorted(picked)
        best = None
        for a, b in zip(taken, taken[1:]):
            if b - a > 1 and (best is None or b - a > best[1] - best[0]):
                best = (a, b)
        picked.append((best[0] + best[1]) // 2)
    return [vals[i] for i in picked]


def grid_allotment(space: ConfigSpace, fis, budget: int, keep=None) -> list[int]:
    """Number of distinct values per dimension for an adaptive grid of ``budget`` points.

    Kept dimensions are visited in descending FIS order; each takes as many values
    as fit, ``n_j = min(cap_j, budget // prod(previous n))``. Dimensions whose
    normalized FIS is below the kept-set average are capped at 3 values (default,
    min, max). Counts never shrink as the budget grows, so grids are nested.
    """
    keep = _keep(space, keep if keep is not None else getattr(fis, "keep_mask", None))
    scores = list(getattr(fis, "normalized", fis)) if fis is not None else [1.0] * space.d
    kept = [j for j in range(space.d) if keep[j]]
    counts = [1] * space.d
    if not kept:
        return counts
    mean = sum(scores[j] for j in kept) / len(kept)
    order = sorted(kept, key=lambda j: (-scores[j], j))
    prod = 1
    for j in order:
        cap = len(space.dims[j].values)
        if scores[j] < mean:
            cap = min(cap, 3)
        counts[j] = max(1, min(cap, budget // prod))
        prod *= counts[j]
    return counts


def sample_adaptive_grid(space: ConfigSpace, fis, budget: int, keep=None) -> list[ConfigVector]:
    """Full-factorial grid with more values for more important dimensions.

    ``fis`` is a FisReport (or a plain sequence of normalized scores); ``budget``
    bounds the number of points.
    """
    counts = grid_allotment(space, fis, max(int(budget), 1), keep)
    axes = [value_order(d)[:c] for d, c in zip(space.dims, counts)]
    return [ConfigVector(space.name, tuple(p)) for p in itertools.product(*axes)]


# ---------------------------------------------------------------------------
# clustering of context candidates


@dataclass(frozen=True)
class ClusterModel:
    C: int
    representatives: tuple       # indices into the candidate list
    assignment: tuple            # candidate index -> cluster index
    lo: tuple
    span: tuple

    def representative_of(self, idx: int) -> int:
        return self.representatives[self.assignment[idx]]

    def scale(self, coords) -> np.ndarray:
        arr = np.atleast_2d(np.asarray(coords, dtype=float))
        return (arr - np.asarray(self.lo)) / np.asarray(self.span)

    def nearest(self, candidates: Sequence[ConfigVector], coords) -> int:
        """Cluster index whose representative is closest to ``coords``."""
        reps = self.scale([candidates[r].coords for r in self.representatives])
        x = self.scale(coords)[0]
        return int(np.argmin(np.linalg.norm(reps - x, axis=1)))


def cluster_thetac(candidates: Sequence[ConfigVector], C: int, seed: int,
                   max_iter: int = 100) -> ClusterModel:
    """k-medoids (alternating) over min-max normalized coordinates."""
    n = len(candidates)
    if C < 1:
        raise ContractError("C must be >= 1")
    if C > n:
        raise ContractError(f"C={C} exceeds the {n} candidates")
    X = np.array([c.coords for c in candidates], dtype=float)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span = np.where(span > 0, span, 1.0)
    Z = (X - lo) / span
    if C == n:
        return ClusterModel(C, tuple(range(n)), tuple(range(n)), tuple(lo), tuple(span))
    D = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=2)
    rng = np.random.default_rng(seed)

    medoids = [int(rng.integers(n))]
    while len(medoids) < C:
        d2 = D[:, medoids].min(axis=1) ** 2
        d2[medoids] = 0.0
        if d2.sum() > 0:
            nxt = int(rng.choice(n, p=d2 / d2.sum()))
        else:
            rest = [i for i in range(n) if i not in medoids]
            nxt = int(rng.choice(rest))
        medoids.append(nxt)

    for _ in range(max_iter):
        labels = np.argmin(D[:, medoids], axis=1)
        new = []
        for c, med in enumerate(medoids):
            members = np.flatnonzero(labels == c)
            if len(members) == 0:
                new.append(med)
                continue
            within = D[np.ix_(members, members)].sum(axis=1)
            new.append(int(members[np.argmin(within)]))
        if new == medoids:
            break
        medoids = new
    labels = np.argmin(D[:, medoids], axis=1)
    # a medoid always belongs to its own cluster, even among duplicates
    for c, med in enumerate(medoids):
        labels[med] = c
    return ClusterModel(C, tuple(medoids), tuple(int(x) for x in labels), tuple(lo), tuple(span))


def crossover_enrich(candidates: Sequence[ConfigVector], location: int | None = None,
                     seed: int = 0) -> list[ConfigVector]:
    """Cartesian product of distinct prefixes and suffixes split at ``location``."""
    if not candidates:
        return []
    d = len(candidates[0].coords)
    if location is None:
        if d < 2:
            raise ContractError("crossover needs at least two dimensions")
        location = int(np.random.default_rng(seed).integers(1, d))
    if not 1 <= location < d:
        raise ContractError(f"crossover location {location} outside [1, {d})")
    prefixes = list(dict.fromkeys(c.coords[:location] for c in candidates))
    suffixes = list(dict.fromkeys(c.coords[location:] for c in candidates))
    space_id = candidates[0].space_id
    return [ConfigVector(space_id, p + s) for p in prefixes for s in suffixes]


def choose_budget(predicted_default_latency: float, threshold: float = 10.0,
                  high: tuple = (54, 81), low: tuple = (27, 54)) -> SampleBudget:
    """Medium budget for queries predicted to run longer than ``threshold`` seconds."""
    if predicted_default_latency < 0:
        raise ContractError("latency must be non-negative")
    return SampleBudget(*(high if predicted_default_latency > threshold else low))


def joint_space(plan: ConfigSpace, stage: ConfigSpace) -> ConfigSpace:
    """Plan and stage dimensions concatenated, sampled as one vector."""
    return ConfigSpace(f"{plan.name}+{stage.name}", Group.PLAN, plan.dims + stage.dims)


def split_joint(vecs: Sequence[ConfigVector], plan: ConfigSpace, stage: ConfigSpace):
    dp = plan.d
    return [(ConfigVector(plan.name, v.coords[:dp]), ConfigVector(stage.name, v.coords[dp:]))
            for v in vecs]


def draw(space: ConfigSpace, n: int, method: str, seed: int, fis=None, keep=None):
    if method == "random":
        return sample_random(space, n, seed, keep)
    if method == "lhs":
        return sample_lhs(space, n, seed, keep)
    if method == "grid":
        return sample_adaptive_grid(space, fis, n, keep)
    raise ContractError(f"unknown sampler {method!r}")
