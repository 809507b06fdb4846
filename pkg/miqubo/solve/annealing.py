import logging
from time import perf_counter
from typing import Optional

import numpy as np

from miqubo.qubo import QuboProblem
from miqubo.solve.base import (
    ENERGY_TOL,
    AnnealSchedule,
    SolverResult,
    check_initial,
    finalize,
)

logger = logging.getLogger(__name__)


def beta_schedule(schedule: AnnealSchedule) -> np.ndarray:
    """Inverse temperatures, geometric from beta_start to beta_end."""
    return np.geomspace(schedule.beta_start, schedule.beta_end, int(schedule.sweeps))


def solve_sa(
    q: QuboProblem,
    schedule: Optional[AnnealSchedule] = None,
    initial=None,
) -> SolverResult:
    """Single-flip Metropolis annealing, all restarts advanced together.

    Each sweep proposes every variable once, in a fresh random order per
    restart. The best state seen by each restart at a sweep boundary is
    returned as a sample.

    Parameters
    ----------
    q : QuboProblem
    schedule : AnnealSchedule, optional
        Defaults to ``AnnealSchedule()``.
    initial : array-like, optional
        Starting state shared by all restarts; random when omitted.
    """
    schedule = schedule or AnnealSchedule()
    started = perf_counter()
    start = check_initial(q, initial)
    rng = np.random.default_rng(schedule.seed)
    reads, n = int(schedule.restarts), q.n
    if start is None:
        states = rng.integers(0, 2, size=(reads, n)).astype(float)
    else:
        states = np.tile(start.astype(float), (reads, 1))
    J = q.couplings
    fields = q.linear + states @ J
    current = states @ q.linear + 0.5 * np.einsum("ri,ri->r", states @ J, states)
    best_states, best_energies = states.copy(), current.copy()
    rows = np.arange(reads)
    accepted = 0
    for beta in beta_schedule(schedule):
        if n == 0:
            break
        orders = rng.permuted(np.tile(np.arange(n), (reads, 1)), axis=1)
        thresholds = rng.random((reads, n))
        for step in range(n):
            idx = orders[:, step]
            x = states[rows, idx]
            sign = 1.0 - 2.0 * x
            delta = sign * fields[rows, idx]
            # delta <= 0 always passes, exponent capped to avoid overflow
            flip = thresholds[:, step] < np.exp(np.minimum(0.0, -beta * delta))
            if not flip.any():
                continue
            hit = rows[flip]
            states[hit, idx[flip]] += sign[flip]
            fields[hit] += sign[flip, None] * J[idx[flip]]
            current[hit] += delta[flip]
            accepted += int(flip.sum())
        improved = current < best_energies - ENERGY_TOL
        best_states[improved] = states[improved]
        best_energies[improved] = current[improved]
    logger.debug(f"SA finished {schedule.sweeps} sweeps x {reads} restarts, {accepted} flips")
    stats = {
        "iterations": int(schedule.sweeps) * reads,
        "restarts": reads,
        "moves_accepted": accepted,
    }
    return finalize(q, list(best_states.astype(np.int8)), stats, "sa", started)
