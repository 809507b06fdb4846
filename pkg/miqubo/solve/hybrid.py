import logging
from dataclasses import replace
from time import perf_counter
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed

from miqubo.exceptions import ConfigError
from miqubo.qubo import QuboProblem, energy
from miqubo.solve.annealing import solve_sa
from miqubo.solve.base import (
    ENERGY_TOL,
    EXHAUSTIVE_MAX_N,
    HybridConfig,
    SolverResult,
    best_of,
    check_initial,
    finalize,
    random_state,
    solve_exhaustive,
)
from miqubo.solve.tabu import solve_tabu
from miqubo.utils import derive_rng, derive_seed

logger = logging.getLogger(__name__)

LEGS = ("sa", "tabu", "subproblem")


def choose_subset(
    q: QuboProblem, current: np.ndarray, subset_size: int, rng: np.random.Generator
) -> np.ndarray:
    """The ``subset_size`` variables most strongly coupled to the bits set in ``current``.

    The score of variable i is sum_j |q_ij| over the other set bits j, with
    the uniform cardinality penalty couplers left out. Ties are broken in a
    seeded random order.
    """
    weights = q.couplings
    if q.k is not None:
        weights = weights - 2.0 * q.penalty_strength * (1.0 - np.eye(q.n))
    pull = np.abs(weights) @ np.asarray(current, dtype=float)
    order = rng.permutation(q.n)
    ranked = order[np.argsort(-pull[order], kind="stable")]
    return np.sort(ranked[: int(subset_size)])


def clamp(q: QuboProblem, current: np.ndarray, subset: np.ndarray) -> QuboProblem:
    """Sub-QUBO over ``subset`` with every other bit fixed to ``current``."""
    rest = np.setdiff1d(np.arange(q.n), subset)
    linear = q.linear[subset] + q.couplings[np.ix_(subset, rest)] @ current[rest]
    block = q.upper[np.ix_(subset, subset)]
    quadratic = {
        (a, b): block[a, b]
        for a in range(subset.size)
        for b in range(a + 1, subset.size)
        if block[a, b] != 0.0
    }
    return QuboProblem(linear=linear, quadratic=quadratic)


def sample_subproblem(q: QuboProblem, current, subset_size: int, seed: int) -> np.ndarray:
    """Exactly re-optimize one strongly coupled block of ``current``.

    The rest of the bits stay clamped. The block assignment changes only when
    the exact sub-solve is strictly better, so energy never increases.
    """
    current = check_initial(q, current)
    if current is None:
        raise ConfigError("sample_subproblem needs a current state")
    if not 1 <= int(subset_size) <= min(q.n, EXHAUSTIVE_MAX_N):
        raise ConfigError(
            f"subset_size must lie in [1, {min(q.n, EXHAUSTIVE_MAX_N)}], got {subset_size}"
        )
    subset = choose_subset(q, current, int(subset_size), derive_rng(seed))
    sub = clamp(q, current, subset)
    result = solve_exhaustive(sub)
    if result.best_energy < energy(sub, current[subset]) - ENERGY_TOL:
        improved = current.copy()
        improved[subset] = result.best
        return improved
    return current.copy()


def _subproblem_leg(q: QuboProblem, config: HybridConfig, incumbent, round_index: int):
    started = perf_counter()
    size = min(int(config.subproblem_size), q.n, EXHAUSTIVE_MAX_N)
    state = incumbent
    states = [incumbent]
    for index in range(int(config.subproblem_passes)):
        state = sample_subproblem(q, state, size, derive_seed(config.seed, 2, round_index, index))
        states.append(state)
    stats = {"iterations": int(config.subproblem_passes), "restarts": 0, "moves_accepted": 0}
    return finalize(q, states, stats, "subproblem", started)


def _run_leg(q: QuboProblem, config: HybridConfig, leg: int, incumbent, round_index: int):
    seed = derive_seed(config.seed, leg, round_index)
    if LEGS[leg] == "sa":
        return solve_sa(q, replace(config.sa, seed=seed), initial=incumbent)
    if LEGS[leg] == "tabu":
        return solve_tabu(q, replace(config.tabu, seed=seed), initial=incumbent)
    return _subproblem_leg(q, config, incumbent, round_index)


def solve_hybrid(
    q: QuboProblem,
    config: Optional[HybridConfig] = None,
    initial=None,
) -> SolverResult:
    """Round-based portfolio of annealing, tabu and sub-problem sampling.

    All three legs start from the incumbent every round and run
    concurrently. Each leg draws its seed from (seed, leg, round), and the
    incumbent becomes the minimum over the incumbent and the leg results,
    so the outcome does not depend on scheduling. Stops early after a round
    without improvement.
    """
    config = config or HybridConfig()
    started = perf_counter()
    incumbent = check_initial(q, initial)
    if incumbent is None:
        incumbent = random_state(derive_rng(config.seed, len(LEGS)), q.n)
    incumbent_energy = energy(q, incumbent)
    history: List[float] = [incumbent_energy]
    states = [incumbent]
    restarts = moves = rounds = 0
    for round_index in range(int(config.rounds)):
        results = Parallel(n_jobs=config.n_jobs, prefer="threads")(
            delayed(_run_leg)(q, config, leg, incumbent, round_index) for leg in range(len(LEGS))
        )
        rounds += 1
        for result in results:
            restarts += int(result.stats.get("restarts", 0))
            moves += int(result.stats.get("moves_accepted", 0))
            for sample in result.samples:
                states.extend([sample.bits] * sample.num_occurrences)
        candidates = [(incumbent, incumbent_energy)]
        candidates += [(result.best, result.best_energy) for result in results]
        best_bits, best_energy = best_of(candidates)
        improved = best_energy < incumbent_energy - ENERGY_TOL
        incumbent, incumbent_energy = best_bits, best_energy
        history.append(incumbent_energy)
        logger.info(f"Hybrid round {round_index}: incumbent energy {incumbent_energy:.6g}")
        if not improved:
            break
    stats = {
        "iterations": rounds,
        "restarts": restarts,
        "moves_accepted": moves,
        "history": history,
    }
    return finalize(q, states, stats, "hybrid", started)
