"""Exact CVaR-optimal traversal policies for graphs with stochastic, correlated edge costs."""

__version__ = "0.1.0"

from .belief import CorrelatedBelief, IndependentBelief, LogisticHypothesis, GridSurface
from .graph import Graph, Instance, Mode, validate_instance
from .io import load_instance, instance_from_dict
from .oracle import oracle_value
from .risk import DiscreteDistribution, cvar, var
from .solver import Solution, SolveOptions, resolve_with_alpha, solve

__all__ = [
    "CorrelatedBelief", "IndependentBelief", "LogisticHypothesis", "GridSurface",
    "Graph", "Instance", "Mode", "validate_instance", "load_instance", "instance_from_dict",
    "oracle_value", "DiscreteDistribution", "cvar", "var",
    "Solution", "SolveOptions", "resolve_with_alpha", "solve",
]
