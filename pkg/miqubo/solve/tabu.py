import logging
from time import perf_counter
from typing import Optional

import numpy as np

from miqubo.qubo import QuboProblem, energy
from miqubo.solve.base import (
    ENERGY_TOL,
    SolverResult,
    TabuParams,
    best_of,
    check_initial,
    finalize,
    random_state,
)

logger = logging.getLogger(__name__)


def admissible_moves(
    current: float,
    delta: np.ndarray,
    best_energy: float,
    tabu_until: np.ndarray,
    iteration: int,
) -> np.ndarray:
    """Mask of flips allowed at ``iteration``.

    A tabu flip is still allowed when it reaches an energy below the best
    known one (aspiration).
    """
    free = tabu_until <= iteration
    aspires = current + delta < best_energy - ENERGY_TOL
    return free | aspires


def perturb(rng: np.random.Generator, bits: np.ndarray) -> np.ndarray:
    n = bits.size
    flips = rng.choice(n, size=max(1, n // 4), replace=False)
    state = bits.copy()
    state[flips] = 1 - state[flips]
    return state


def solve_tabu(
    q: QuboProblem,
    params: Optional[TabuParams] = None,
    initial=None,
) -> SolverResult:
    """Multi-start steepest-descent tabu search over single flips.

    The first start is ``initial`` (or random); each later start perturbs
    the best state found so far by flipping a quarter of its bits.
    """
    params = params or TabuParams()
    started = perf_counter()
    n = q.n
    tenure = params.tenure_for(n)
    iterations = params.iterations_for(n)
    rng = np.random.default_rng(params.seed)
    J = q.couplings
    start = check_initial(q, initial)
    if start is None:
        start = random_state(rng, n)

    best_bits, best_energy = start.copy(), energy(q, start)
    samples = []
    moves = total_iterations = 0
    for restart in range(int(params.restarts)):
        state = start if restart == 0 else perturb(rng, best_bits)
        state = state.astype(np.int8)
        fields = q.linear + J @ state
        current = energy(q, state)
        local_bits, local_energy = state.copy(), current
        tabu_until = np.zeros(n, dtype=np.int64)
        for iteration in range(iterations if n else 0):
            total_iterations += 1
            delta = (1 - 2 * state) * fields
            allowed = admissible_moves(current, delta, best_energy, tabu_until, iteration)
            if not allowed.any():
                continue
            # first minimum, lowest index on ties
            i = int(np.argmin(np.where(allowed, delta, np.inf)))
            sign = 1 - 2 * int(state[i])
            state[i] += sign
            fields += sign * J[:, i]
            current += delta[i]
            tabu_until[i] = iteration + 1 + tenure
            moves += 1
            if current < local_energy - ENERGY_TOL:
                local_bits, local_energy = state.copy(), current
            if current < best_energy - ENERGY_TOL:
                best_bits, best_energy = state.copy(), current
        samples.append(local_bits)
        best_bits, best_energy = best_of([(best_bits, best_energy), (local_bits, local_energy)])
        logger.debug(f"Tabu restart {restart}: local best {local_energy:.6g}")
    stats = {
        "iterations": total_iterations,
        "restarts": int(params.restarts),
        "moves_accepted": moves,
    }
    return finalize(q, samples, stats, "tabu", started)
