import logging
from dataclasses import dataclass, field
from time import perf_counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from miqubo.exceptions import ConfigError, InternalConsistencyError
from miqubo.qubo import QuboProblem, energies, energy
from miqubo.utils import bits_to_string

logger = logging.getLogger(__name__)

ENERGY_TOL = 1e-12
EXHAUSTIVE_MAX_N = 24
_CHUNK = 1 << 16


def tie_key(bits: Iterable[int]) -> Tuple[int, ...]:
    """Ordering used to break energy ties.

    Bitstrings compare lexicographically starting from the highest
    variable index, i.e. by the integer sum x_i 2^i. Among strings of equal
    weight the one selecting the lowest indices wins.
    """
    return tuple(int(b) for b in reversed(list(bits)))


@dataclass(frozen=True)
class AnnealSchedule:
    sweeps: int = 1000
    beta_start: float = 0.1
    beta_end: float = 10.0
    restarts: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.sweeps) < 1:
            raise ConfigError(f"sweeps must be at least 1, got {self.sweeps}")
        if int(self.restarts) < 1:
            raise ConfigError(f"restarts must be at least 1, got {self.restarts}")
        if not 0 < self.beta_start <= self.beta_end:
            raise ConfigError(
                f"Need 0 < beta_start <= beta_end, got {self.beta_start}, {self.beta_end}"
            )


@dataclass(frozen=True)
class TabuParams:
    tenure: Optional[int] = None
    max_iterations: Optional[int] = None
    restarts: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tenure is not None and int(self.tenure) < 1:
            raise ConfigError(f"tenure must be at least 1, got {self.tenure}")
        if self.max_iterations is not None and int(self.max_iterations) < 1:
            raise ConfigError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if int(self.restarts) < 1:
            raise ConfigError(f"restarts must be at least 1, got {self.restarts}")

    def tenure_for(self, n: int) -> int:
        if self.tenure is not None:
            return int(self.tenure)
        return min(20, max(1, n // 4))

    def iterations_for(self, n: int) -> int:
        if self.max_iterations is not None:
            return int(self.max_iterations)
        return max(50, 10 * n)


@dataclass(frozen=True)
class HybridConfig:
    sa: AnnealSchedule = field(default_factory=lambda: AnnealSchedule(sweeps=500, restarts=10))
    tabu: TabuParams = field(default_factory=TabuParams)
    subproblem_size: int = 10
    subproblem_passes: int = 4
    rounds: int = 3
    seed: int = 0
    n_jobs: Optional[int] = 3

    def __post_init__(self) -> None:
        if int(self.rounds) < 1:
            raise ConfigError(f"rounds must be at least 1, got {self.rounds}")
        if int(self.subproblem_size) < 1:
            raise ConfigError(f"subproblem_size must be at least 1, got {self.subproblem_size}")
        if int(self.subproblem_passes) < 1:
            raise ConfigError("subproblem_passes must be at least 1")


@dataclass(frozen=True, eq=False)
class Sample:
    bits: np.ndarray
    energy: float
    num_occurrences: int = 1

    @property
    def weight(self) -> int:
        return int(self.bits.sum())

    def to_dict(self) -> dict:
        return {
            "bits": bits_to_string(self.bits),
            "energy": self.energy,
            "num_occurrences": self.num_occurrences,
        }


@dataclass(frozen=True, eq=False)
class SolverResult:
    best: np.ndarray
    best_energy: float
    feasible: bool
    samples: List[Sample]
    stats: Dict[str, float]
    backend: str = ""

    def to_dict(self, include_timing: bool = True) -> dict:
        stats = dict(self.stats)
        if not include_timing:
            stats.pop("wall_time", None)
        return {
            "backend": self.backend,
            "best": bits_to_string(self.best),
            "best_energy": self.best_energy,
            "feasible": self.feasible,
            "samples": [s.to_dict() for s in self.samples],
            "stats": stats,
        }


def is_feasible(q: QuboProblem, bits) -> bool:
    return q.k is None or int(np.sum(bits)) == q.k


def aggregate_samples(q: QuboProblem, states: Sequence[np.ndarray]) -> List[Sample]:
    """Merge duplicate states, re-evaluate energies, sort by (energy, tie key)."""
    counts: Dict[Tuple[int, ...], int] = {}
    for state in states:
        key = tuple(int(b) for b in state)
        counts[key] = counts.get(key, 0) + 1
    if not counts:
        return []
    keys = list(counts)
    values = energies(q, np.array(keys, dtype=float).reshape(len(keys), q.n))
    samples = [
        Sample(np.array(key, dtype=np.int8), float(value), counts[key])
        for key, value in zip(keys, values)
    ]
    samples.sort(key=lambda s: (s.energy, tie_key(s.bits)))
    return _merge_ties(samples)


def _merge_ties(samples: List[Sample]) -> List[Sample]:
    # energies within ENERGY_TOL are ordered by tie key alone
    ordered: List[Sample] = []
    group: List[Sample] = []
    for sample in samples:
        if group and sample.energy - group[0].energy > ENERGY_TOL:
            ordered.extend(sorted(group, key=lambda s: tie_key(s.bits)))
            group = []
        group.append(sample)
    ordered.extend(sorted(group, key=lambda s: tie_key(s.bits)))
    return ordered


def best_of(candidates: Sequence[Tuple[np.ndarray, float]]) -> Tuple[np.ndarray, float]:
    """Minimum energy; ties within ENERGY_TOL go to the smallest tie key."""
    best_bits, best_energy = None, np.inf
    for bits, value in candidates:
        if best_bits is None or value < best_energy - ENERGY_TOL:
            best_bits, best_energy = bits, value
        elif abs(value - best_energy) <= ENERGY_TOL and tie_key(bits) < tie_key(best_bits):
            best_bits, best_energy = bits, min(value, best_energy)
    return best_bits, best_energy


def finalize(
    q: QuboProblem,
    states: Sequence[np.ndarray],
    stats: Dict[str, float],
    backend: str,
    started: float,
) -> SolverResult:
    samples = aggregate_samples(q, states)
    best = samples[0]
    check = energy(q, best.bits)
    if abs(check - best.energy) > 1e-9:
        raise InternalConsistencyError(
            f"Best energy {best.energy} does not re-evaluate ({check})"
        )
    stats = dict(stats)
    stats["wall_time"] = perf_counter() - started
    return SolverResult(
        best=best.bits,
        best_energy=best.energy,
        feasible=is_feasible(q, best.bits),
        samples=samples,
        stats=stats,
        backend=backend,
    )


def enumerate_states(n: int, start: int, stop: int) -> np.ndarray:
    """Rows for integers start..stop-1, bit i of the integer is variable i."""
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)


def solve_exhaustive(q: QuboProblem, feasible_only: bool = False) -> SolverResult:
    """Global minimum by enumerating all 2^n states.

    With ``feasible_only`` and a cardinality target only weight-k states
    are considered. States are visited in tie-key order, so the first
    minimum found wins ties.
    """
    if q.n > EXHAUSTIVE_MAX_N:
        raise ConfigError(f"Exhaustive search is capped at {EXHAUSTIVE_MAX_N} variables, got {q.n}")
    started = perf_counter()
    restrict = feasible_only and q.k is not None
    best_bits, best_energy = None, np.inf
    visited = 0
    total = 1 << q.n
    for start in range(0, total, _CHUNK):
        states = enumerate_states(q.n, start, min(total, start + _CHUNK))
        if restrict:
            states = states[states.sum(axis=1) == q.k]
            if states.shape[0] == 0:
                continue
        visited += states.shape[0]
        values = energies(q, states)
        lowest = values.min()
        first = int(np.flatnonzero(values <= lowest + ENERGY_TOL)[0])
        if best_bits is None or values[first] < best_energy - ENERGY_TOL:
            best_bits, best_energy = states[first].copy(), float(values[first])
    logger.debug(f"Exhaustive search visited {visited} states of {q.n} variables")
    return finalize(
        q,
        [best_bits],
        {"iterations": visited, "restarts": 0, "moves_accepted": 0},
        "exhaustive",
        started,
    )


def random_state(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n).astype(np.int8)


def check_initial(q: QuboProblem, initial) -> Optional[np.ndarray]:
    if initial is None:
        return None
    bits = np.asarray(initial).reshape(-1).astype(np.int8)
    if bits.size != q.n or not np.isin(bits, (0, 1)).all():
        raise ConfigError(f"Initial state must be a 0/1 vector of length {q.n}")
    return bits
