import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from miqubo.exceptions import ConfigError, InfeasibleSelectionError
from miqubo.infotheory import CmiTensor
from miqubo.qubo import QuboProblem, build_miqubo, energy, with_cardinality
from miqubo.solve.annealing import solve_sa
from miqubo.solve.base import (
    AnnealSchedule,
    HybridConfig,
    SolverResult,
    TabuParams,
    best_of,
    solve_exhaustive,
)
from miqubo.solve.hybrid import solve_hybrid
from miqubo.solve.tabu import solve_tabu

logger = logging.getLogger(__name__)

BACKENDS = ("exhaustive", "sa", "tabu", "hybrid")

SolverConfig = Union[AnnealSchedule, TabuParams, HybridConfig, None]


@dataclass(frozen=True, eq=False)
class SelectionResult:
    selected: Tuple[int, ...]
    objective: float
    result: SolverResult
    labels: Tuple[str, ...] = ()
    problem: Optional[QuboProblem] = None

    @property
    def k(self) -> int:
        return len(self.selected)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self.labels[i] for i in self.selected) if self.labels else ()

    def to_dict(self, include_timing: bool = True) -> dict:
        return {
            "k": self.k,
            "selected": list(self.selected),
            "names": list(self.names),
            "objective": self.objective,
            "solver": self.result.to_dict(include_timing=include_timing),
        }


def solve(q: QuboProblem, backend: str = "exhaustive", config: SolverConfig = None) -> SolverResult:
    """Dispatch ``q`` to one of :data:`BACKENDS`."""
    if backend == "exhaustive":
        return solve_exhaustive(q, feasible_only=True)
    if backend == "sa":
        return solve_sa(q, config if isinstance(config, AnnealSchedule) else None)
    if backend == "tabu":
        return solve_tabu(q, config if isinstance(config, TabuParams) else None)
    if backend == "hybrid":
        return solve_hybrid(q, config if isinstance(config, HybridConfig) else None)
    raise ConfigError(f"Unknown backend {backend!r}, expected one of {BACKENDS}")


def select_features(
    c: CmiTensor,
    k: int,
    backend: str = "exhaustive",
    config: SolverConfig = None,
    penalty: Optional[float] = None,
) -> SelectionResult:
    """Best k-subset of features under the MI + CMI objective.

    The objective is reported as a positive number: minus the energy of the
    unpenalized MIQUBO at the chosen weight-k state.
    """
    base = build_miqubo(c)
    if not 1 <= int(k) <= base.n:
        raise ConfigError(f"k must lie in [1, {base.n}], got {k}")
    q = with_cardinality(base, int(k), penalty)
    result = solve(q, backend, config)
    feasible = [s for s in result.samples if s.weight == int(k)]
    if not feasible:
        raise InfeasibleSelectionError(int(k), backend)
    bits, value = best_of([(s.bits, energy(base, s.bits)) for s in feasible])
    selected = tuple(int(i) for i in np.flatnonzero(bits))
    logger.info(f"k={k} ({backend}): selected {selected}, objective {-value:.6g}")
    return SelectionResult(
        selected=selected,
        objective=-value,
        result=result,
        labels=tuple(c.feature_names),
        problem=q,
    )
