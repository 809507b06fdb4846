import itertools

import numpy as np
import pytest

import miqubo.solve.select as select_module
from miqubo.exceptions import ConfigError, InfeasibleSelectionError
from miqubo.qubo import QuboProblem, energy, with_cardinality
from miqubo.solve import (
    AnnealSchedule,
    HybridConfig,
    Sample,
    SolverResult,
    TabuParams,
    sample_subproblem,
    select_features,
    solve,
    solve_exhaustive,
    solve_hybrid,
    solve_sa,
    solve_tabu,
)
from miqubo.solve.base import aggregate_samples, tie_key
from miqubo.solve.hybrid import choose_subset
from miqubo.solve.tabu import admissible_moves, perturb


def random_problem(seed, n):
    rng = np.random.default_rng(seed)
    quadratic = {(i, j): float(rng.normal()) for i in range(n) for j in range(i + 1, n)}
    return QuboProblem(linear=rng.normal(size=n), quadratic=quadratic)


def uniform_problem(seed, n=12):
    rng = np.random.default_rng(seed)
    quadratic = {(i, j): float(rng.uniform(-1, 1)) for i in range(n) for j in range(i + 1, n)}
    return QuboProblem(linear=rng.uniform(-1, 1, size=n), quadratic=quadratic)


def brute_force(q):
    best, best_energy = None, np.inf
    for bits in itertools.product((0, 1), repeat=q.n):
        value = sum(q.linear[i] * bits[i] for i in range(q.n))
        value += sum(v * bits[i] * bits[j] for (i, j), v in q.quadratic.items())
        if value < best_energy:
            best, best_energy = np.array(bits), value
    return best, best_energy


def block_problem():
    """Two blocks of eight; all-zero is a single-flip local minimum."""
    quadratic = {}
    for block in (range(0, 8), range(8, 16)):
        for i, j in itertools.combinations(block, 2):
            quadratic[(i, j)] = -3.0
    return QuboProblem(linear=np.ones(16), quadratic=quadratic)


def test_tie_key_prefers_low_indices():
    assert tie_key([1, 0, 1, 0]) < tie_key([0, 1, 1, 0])
    assert tie_key([0, 0, 0]) < tie_key([1, 0, 0])


def test_exhaustive_examples():
    zero = solve_exhaustive(QuboProblem(linear=np.zeros(4)))
    np.testing.assert_array_equal(zero.best, [0, 0, 0, 0])
    assert zero.best_energy == 0.0
    assert zero.stats["iterations"] == 16

    small = solve_exhaustive(QuboProblem(linear=[-1.0, 2.0]))
    np.testing.assert_array_equal(small.best, [1, 0])
    assert small.best_energy == -1.0
    assert small.feasible
    assert small.backend == "exhaustive"


def test_exhaustive_matches_brute_force():
    q = random_problem(12, 12)
    result = solve_exhaustive(q)
    bits, value = brute_force(q)
    np.testing.assert_array_equal(result.best, bits)
    assert result.best_energy == pytest.approx(value, abs=1e-9)
    assert result.best_energy == pytest.approx(energy(q, result.best), abs=1e-12)


def test_exhaustive_feasible_only():
    q = with_cardinality(random_problem(3, 8), k=3, P=1e-3)
    result = solve_exhaustive(q, feasible_only=True)
    assert result.best.sum() == 3
    assert result.feasible
    assert result.stats["iterations"] == 56


def test_exhaustive_size_cap():
    with pytest.raises(ConfigError):
        solve_exhaustive(QuboProblem(linear=np.zeros(25)))


def test_aggregate_samples():
    q = QuboProblem(linear=[1.0, -1.0])
    samples = aggregate_samples(q, [np.array([0, 1]), np.array([1, 1]), np.array([0, 1])])
    assert [s.to_dict() for s in samples] == [
        {"bits": "01", "energy": -1.0, "num_occurrences": 2},
        {"bits": "11", "energy": 0.0, "num_occurrences": 1},
    ]


def test_sa_zero_problem():
    result = solve_sa(QuboProblem(linear=np.zeros(5)), AnnealSchedule(sweeps=20, restarts=3))
    assert result.best_energy == 0.0
    assert all(s.energy == 0.0 for s in result.samples)
    assert result.stats["iterations"] == 60
    assert result.stats["restarts"] == 3


def test_sa_deterministic():
    q = random_problem(1, 10)
    schedule = AnnealSchedule(sweeps=100, restarts=5, seed=42)
    first = solve_sa(q, schedule).to_dict(include_timing=False)
    second = solve_sa(q, schedule).to_dict(include_timing=False)
    assert first == second
    assert "wall_time" not in first["stats"]


def test_sa_finds_optimum():
    schedule = AnnealSchedule(sweeps=1000, restarts=50)
    hits = 0
    for seed in range(10):
        q = random_problem(100 + seed, 10)
        result = solve_sa(q, AnnealSchedule(**{**vars(schedule), "seed": seed}))
        hits += result.best_energy <= solve_exhaustive(q).best_energy + 1e-9
    assert hits >= 9


def test_sa_rejects_bad_initial():
    with pytest.raises(ConfigError):
        solve_sa(QuboProblem(linear=np.zeros(3)), initial=[1, 0])


@pytest.mark.parametrize(
    "kwargs",
    [{"sweeps": 0}, {"restarts": 0}, {"beta_start": 2.0, "beta_end": 1.0}, {"beta_start": 0.0}],
    ids=["sweeps", "restarts", "reversed", "zero-beta"],
)
def test_schedule_validation(kwargs):
    with pytest.raises(ConfigError):
        AnnealSchedule(**kwargs)


def test_tabu_single_variable():
    result = solve_tabu(QuboProblem(linear=[-1.0]), TabuParams(restarts=1))
    np.testing.assert_array_equal(result.best, [1])
    assert result.best_energy == -1.0
    assert result.backend == "tabu"


def test_tabu_aspiration():
    delta = np.array([-2.0, 1.0, -0.5])
    tabu_until = np.array([5, 0, 5])
    allowed = admissible_moves(0.0, delta, -1.0, tabu_until, iteration=1)
    np.testing.assert_array_equal(allowed, [True, True, False])
    np.testing.assert_array_equal(
        admissible_moves(0.0, delta, -1.0, tabu_until, iteration=5), [True, True, True]
    )


def test_perturb_flips_a_quarter():
    bits = np.zeros(8, dtype=np.int8)
    assert perturb(np.random.default_rng(0), bits).sum() == 2
    assert bits.sum() == 0


def test_tabu_deterministic():
    q = random_problem(2, 12)
    params = TabuParams(restarts=5, seed=9)
    assert solve_tabu(q, params).to_dict(False) == solve_tabu(q, params).to_dict(False)


def test_tabu_finds_optimum():
    hits = 0
    for seed in range(10):
        q = random_problem(200 + seed, 12)
        result = solve_tabu(q, TabuParams(restarts=20, seed=seed))
        hits += result.best_energy <= solve_exhaustive(q).best_energy + 1e-9
    assert hits >= 9


def test_subproblem_whole_problem_is_exact():
    q = random_problem(5, 10)
    current = np.zeros(10, dtype=np.int8)
    improved = sample_subproblem(q, current, 10, seed=1)
    assert energy(q, improved) == pytest.approx(solve_exhaustive(q).best_energy, abs=1e-12)


def test_subproblem_keeps_optimum():
    q = random_problem(6, 10)
    best = solve_exhaustive(q).best
    np.testing.assert_array_equal(sample_subproblem(q, best, 4, seed=3), best)


def test_subproblem_escapes_block_minimum():
    q = block_problem()
    current = np.zeros(16, dtype=np.int8)
    # every single flip from all-zero costs +1
    assert all(energy(q, np.eye(16, dtype=int)[i]) == 1.0 for i in range(16))
    for seed in range(5):
        improved = sample_subproblem(q, current, 8, seed=seed)
        assert energy(q, improved) < energy(q, current)


def coupled_chain():
    quadratic = {(0, 1): 2.0, (1, 2): -0.5, (2, 3): 4.0, (3, 4): 1.0, (0, 4): -3.0}
    return QuboProblem(linear=np.zeros(5), quadratic=quadratic)


@pytest.mark.parametrize(
    "size,expected", [(2, [2, 4]), (3, [1, 2, 4])], ids=["two", "three"]
)
def test_choose_subset_follows_set_bits(size, expected):
    current = np.array([1, 0, 0, 1, 0], dtype=np.int8)
    for seed in range(20):
        subset = choose_subset(coupled_chain(), current, size, np.random.default_rng(seed))
        np.testing.assert_array_equal(subset, expected)


def test_choose_subset_breaks_ties_by_seed():
    current = np.array([1, 0, 0, 1, 0], dtype=np.int8)
    extras = set()
    for seed in range(20):
        subset = choose_subset(coupled_chain(), current, 4, np.random.default_rng(seed))
        assert {1, 2, 4} <= set(subset.tolist())
        extras |= set(subset.tolist()) - {1, 2, 4}
    assert extras == {0, 3}


def test_choose_subset_ignores_penalty_couplers():
    current = np.array([1, 0, 0, 1, 0], dtype=np.int8)
    constrained = with_cardinality(coupled_chain(), k=2, P=100.0)
    for seed in range(5):
        subset = choose_subset(constrained, current, 3, np.random.default_rng(seed))
        np.testing.assert_array_equal(subset, [1, 2, 4])


def test_subproblem_never_increases_energy():
    rng = np.random.default_rng(17)
    for trial in range(30):
        q = random_problem(300 + trial, 14)
        current = rng.integers(0, 2, size=14)
        after = sample_subproblem(q, current, 6, seed=trial)
        assert energy(q, after) <= energy(q, current) + 1e-12


@pytest.mark.parametrize("size", [0, 11], ids=["empty", "too-large"])
def test_subproblem_size_validated(size):
    with pytest.raises(ConfigError):
        sample_subproblem(random_problem(0, 10), np.zeros(10), size, seed=0)


def test_hybrid_zero_problem():
    result = solve_hybrid(QuboProblem(linear=np.zeros(6)), HybridConfig(rounds=1))
    assert result.best_energy == 0.0
    assert result.stats["iterations"] == 1
    assert result.backend == "hybrid"


def test_hybrid_history_never_increases():
    q = random_problem(8, 14)
    result = solve_hybrid(q, HybridConfig(rounds=4, seed=3))
    history = result.stats["history"]
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
    assert result.best_energy == pytest.approx(min(history), abs=1e-9)


def test_hybrid_deterministic():
    q = random_problem(4, 12)
    config = HybridConfig(rounds=2, seed=11)
    first = solve_hybrid(q, config).to_dict(include_timing=False)
    second = solve_hybrid(q, HybridConfig(rounds=2, seed=11, n_jobs=1)).to_dict(include_timing=False)
    assert first == second


def constrained_hits(trials, offset):
    hits = 0
    for seed in range(trials):
        q = with_cardinality(random_problem(offset + seed, 12), k=4)
        result = solve_hybrid(q, HybridConfig(seed=seed))
        exact = solve_exhaustive(q, feasible_only=True)
        hits += result.feasible and result.best_energy <= exact.best_energy + 1e-9
    return hits


def test_hybrid_constrained_optimum():
    assert constrained_hits(10, 400) >= 9


@pytest.mark.slow
def test_hybrid_constrained_oracle_rate():
    assert constrained_hits(100, 4000) >= 98


@pytest.mark.slow
@pytest.mark.parametrize(
    "backend,make_config,required",
    [
        ("sa", lambda seed: AnnealSchedule(sweeps=1000, restarts=50, seed=seed), 95),
        ("tabu", lambda seed: TabuParams(restarts=20, seed=seed), 95),
        ("hybrid", lambda seed: HybridConfig(seed=seed), 98),
    ],
    ids=["sa", "tabu", "hybrid"],
)
def test_oracle_rate_uniform(backend, make_config, required):
    hits = 0
    for seed in range(100):
        q = uniform_problem(5000 + seed)
        result = solve(q, backend, make_config(seed))
        hits += result.best_energy <= solve_exhaustive(q).best_energy + 1e-9
    assert hits >= required


def test_solve_unknown_backend():
    with pytest.raises(ConfigError):
        solve(QuboProblem(linear=np.zeros(2)), "qpu")


def test_select_all_features(duplicate_tensor):
    chosen = select_features(duplicate_tensor, 6)
    assert chosen.selected == (0, 1, 2, 3, 4, 5)
    assert chosen.objective == pytest.approx(duplicate_tensor.values.sum(), abs=1e-12)


def test_select_single_feature(duplicate_tensor):
    chosen = select_features(duplicate_tensor, 1)
    assert chosen.selected == (0,)
    assert chosen.names == ("x0",)
    assert chosen.objective == pytest.approx(np.log(2), abs=1e-12)


def test_select_skips_duplicate(duplicate_tensor):
    chosen = select_features(duplicate_tensor, 2)
    assert chosen.selected == (0, 2)
    assert chosen.objective == pytest.approx(4 * np.log(2), abs=1e-12)
    payload = chosen.to_dict(include_timing=False)
    assert payload["names"] == ["x0", "x2"]
    assert "wall_time" not in payload["solver"]["stats"]


@pytest.mark.parametrize(
    "backend,config",
    [
        ("sa", AnnealSchedule(sweeps=300, restarts=10, seed=1)),
        ("tabu", TabuParams(restarts=5, seed=1)),
        ("hybrid", HybridConfig(seed=1)),
    ],
    ids=["sa", "tabu", "hybrid"],
)
def test_select_heuristic_backends(duplicate_tensor, backend, config):
    chosen = select_features(duplicate_tensor, 2, backend, config)
    assert 2 in chosen.selected
    assert not {0, 1} <= set(chosen.selected)
    assert chosen.objective == pytest.approx(4 * np.log(2), abs=1e-12)
    assert chosen.result.backend == backend


@pytest.mark.parametrize("k", [0, 7], ids=["zero", "above-n"])
def test_select_k_validated(duplicate_tensor, k):
    with pytest.raises(ConfigError):
        select_features(duplicate_tensor, k)


def test_select_reports_infeasible(duplicate_tensor, monkeypatch):
    def empty_selection(q, backend, config):
        bits = np.zeros(q.n, dtype=np.int8)
        return SolverResult(bits, energy(q, bits), False, [Sample(bits, energy(q, bits))], {}, backend)

    monkeypatch.setattr(select_module, "solve", empty_selection)
    with pytest.raises(InfeasibleSelectionError) as info:
        select_features(duplicate_tensor, 3, "sa")
    assert info.value.k == 3
