from .annealing import solve_sa
from .base import (
    AnnealSchedule,
    HybridConfig,
    Sample,
    SolverResult,
    TabuParams,
    solve_exhaustive,
)
from .hybrid import sample_subproblem, solve_hybrid
from .select import BACKENDS, SelectionResult, select_features, solve
from .tabu import solve_tabu

__all__ = [
    "AnnealSchedule",
    "BACKENDS",
    "HybridConfig",
    "Sample",
    "SelectionResult",
    "SolverResult",
    "TabuParams",
    "sample_subproblem",
    "select_features",
    "solve",
    "solve_exhaustive",
    "solve_hybrid",
    "solve_sa",
    "solve_tabu",
]
