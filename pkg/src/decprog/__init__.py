"""Decision optimization over influence diagrams.

Model multi-stage decision problems (including limited-memory ones) as
influence diagrams, compile them into mixed-integer linear programs,
solve with the built-in branch-and-bound engine, and analyze risk and
multi-objective trade-offs.
"""

from .diagram import (Cpt, ConsequenceTable, Diagram, DiagramError, Node, NodeKind,
                      ValidationReport, dump_json, info_states, load_json,
                      strategy_space_size, validate)
from .strategy import (ConsequenceDistribution, GlobalStrategy, LocalStrategy,
                       brute_force_optimum, cvar_direct, deviation_measures,
                       distribution, enumerate_strategies, expected_utility,
                       var_direct)

__all__ = [
    "Cpt", "ConsequenceTable", "Diagram", "DiagramError", "Node", "NodeKind",
    "ValidationReport", "dump_json", "info_states", "load_json",
    "strategy_space_size", "validate",
    "ConsequenceDistribution", "GlobalStrategy", "LocalStrategy",
    "brute_force_optimum", "cvar_direct", "deviation_measures", "distribution",
    "enumerate_strategies", "expected_utility", "var_direct",
]

__version__ = "0.1.0"
