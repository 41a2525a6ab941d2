"""Hierarchical multi-objective tuning of Spark-style query parameters."""
from .core import (
    ConfigSpace,
    ConfigVector,
    ContractError,
    ParamDef,
    ParetoSet,
    Solution,
    dominates,
    hypervolume,
    normalize,
    pareto_filter,
    utopia_nadir,
)
from .costmodel import CostModel, NonDecision, default_spaces, predict_query, predict_subq
from .hmooc import Method, QueryDAG, SolverConfig, SubQ, solve, wun_recommend

__version__ = "0.1.0"

__all__ = [
    "ConfigSpace", "ConfigVector", "ContractError", "ParamDef", "ParetoSet", "Solution",
    "dominates", "hypervolume", "normalize", "pareto_filter", "utopia_nadir",
    "CostModel", "NonDecision", "default_spaces", "predict_query", "predict_subq",
    "Method", "QueryDAG", "SolverConfig", "SubQ", "solve", "wun_recommend",
]
