"""Reasoning engine: condition store, theorem matching, equation solving, search."""

from .algebra import check_consistency, entails_equal, minimal_conflict, solve_equations
from .matching import TheoremApplicationError, apply_theorem, match_premise
from .search import (BFS, DFS, EXHAUSTED, STEP_CAP, TIMEOUT, ReplayReport, SearchNode,
                     SolutionTrace, SolveLimits, TraceStep, Unsolved, init_store,
                     replay_trace, search)
from .store import (ConditionStore, Contradiction, ContradictionError, InvalidProblemError,
                    Provenance)

__all__ = [
    "BFS", "DFS", "EXHAUSTED", "STEP_CAP", "TIMEOUT",
    "ConditionStore", "Contradiction", "ContradictionError", "InvalidProblemError",
    "Provenance", "ReplayReport", "SearchNode", "SolutionTrace", "SolveLimits",
    "TheoremApplicationError", "TraceStep", "Unsolved",
    "apply_theorem", "check_consistency", "entails_equal", "init_store", "match_premise",
    "minimal_conflict", "replay_trace", "search", "solve_equations",
]
