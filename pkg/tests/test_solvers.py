import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slackfree.errors import CapacityError
from slackfree.qubo import Qubo, evaluate
from slackfree.solvers import (
    CAPACITY,
    SolveBudget,
    energy_table,
    exact_enumerate,
    get_backend,
    gray_code_trace,
    optimize_qaoa_params,
    qaoa_expectation,
    qaoa_solve,
    qaoa_state,
    qaoa_statevector,
    simulated_anneal,
)

from .conftest import all_assignments


def random_qubo(rng, n, density=0.7, integer=False):
    coeffs = {}
    for i in range(n):
        for j in range(i, n):
            if i == j or rng.random() < density:
                v = rng.integers(-9, 10) if integer else rng.normal()
                coeffs[(i, j)] = float(v)
    return Qubo(n, coeffs, float(rng.normal()))


def naive_argmin(q):
    """Lexicographic-first minimizer by brute force (x_0 most significant)."""
    best = None
    for x in all_assignments(q.n_vars):
        e = evaluate(q, x)
        if best is None or e < best[1] - 1e-12:
            best = (x, e)
    return best


# ---------------------------------------------------------------- exact


def test_exact_one_var():
    r = exact_enumerate(Qubo(1, {(0, 0): -3.0}, 1.0))
    assert r.x_best.tolist() == [1] and r.value == -2.0 and r.states_visited == 2


def test_exact_all_zero_tie_goes_to_zero_string():
    r = exact_enumerate(Qubo(4, {}))
    assert r.x_best.tolist() == [0, 0, 0, 0] and r.value == 0


def test_exact_tie_breaks_lexicographically():
    # the three one-hot strings tie at -1; 001 is the lexicographically smallest
    q = Qubo(3, {(0, 0): -1.0, (1, 1): -1.0, (2, 2): -1.0, (0, 1): 2.0, (0, 2): 2.0, (1, 2): 2.0})
    assert exact_enumerate(q).x_best.tolist() == [0, 0, 1]


@given(st.integers(1, 10), st.integers(0, 100_000), st.booleans())
def test_exact_matches_naive(n, seed, integer):
    q = random_qubo(np.random.default_rng(seed), n, integer=integer)
    x, e = naive_argmin(q)
    r = exact_enumerate(q)
    assert r.value == pytest.approx(e, abs=1e-9)
    if integer:
        assert r.x_best.tolist() == x.tolist()


@given(st.integers(1, 10), st.integers(0, 100_000))
def test_gray_trace_matches_direct_evaluation(n, seed):
    q = random_qubo(np.random.default_rng(seed), n)
    masks, energies = gray_code_trace(q)
    assert sorted(masks.tolist()) == list(range(1 << n))
    for m, e in zip(masks, energies):
        x = np.array([(int(m) >> i) & 1 for i in range(n)])
        assert e == pytest.approx(evaluate(q, x), abs=1e-9)
    # successive masks differ in one bit
    diffs = np.bitwise_xor(masks[1:], masks[:-1])
    assert np.all(diffs & (diffs - 1) == 0)


def test_exact_capacity():
    with pytest.raises(CapacityError):
        exact_enumerate(Qubo(29, {}))
    assert CAPACITY["exact"] == 28


# ------------------------------------------------------------------- SA


def test_sa_reaches_optimum_on_most_random_instances():
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(20):
        q = random_qubo(rng, 16, density=0.5, integer=True)
        opt = exact_enumerate(q).value
        hits += simulated_anneal(q, SolveBudget(sweeps=500, restarts=4, seed=1)).value == opt
    assert hits >= 16


def test_sa_deterministic_per_seed():
    q = random_qubo(np.random.default_rng(3), 12)
    a = simulated_anneal(q, SolveBudget(sweeps=200, restarts=3, seed=9))
    b = simulated_anneal(q, SolveBudget(sweeps=200, restarts=3, seed=9))
    assert a.x_best.tolist() == b.x_best.tolist() and a.value == b.value


def test_sa_value_consistent_with_state():
    q = random_qubo(np.random.default_rng(4), 30)
    r = simulated_anneal(q, SolveBudget(sweeps=100, restarts=2))
    assert r.value == pytest.approx(evaluate(q, r.x_best)) and r.backend == "sa"


def test_budget_validation():
    with pytest.raises(ValueError):
        SolveBudget(sweeps=0)


# ----------------------------------------------------------------- QAOA


def test_energy_table_bit_order():
    q = Qubo(2, {(0, 0): 1.0, (1, 1): 10.0, (0, 1): 100.0}, 0.5)
    assert energy_table(q).tolist() == [0.5, 1.5, 10.5, 111.5]


@given(st.integers(1, 6), st.integers(0, 1000), st.lists(st.floats(-3, 3), min_size=2, max_size=6))
def test_qaoa_state_normalised(n, seed, angles):
    q = random_qubo(np.random.default_rng(seed), n)
    k = len(angles) // 2
    state = qaoa_state(q, angles[:k], angles[k : 2 * k])
    assert np.linalg.norm(state) == pytest.approx(1.0, abs=1e-12)


def test_qaoa_zero_angles_give_mean_energy():
    q = random_qubo(np.random.default_rng(7), 5)
    mean = np.mean([evaluate(q, x) for x in all_assignments(5)])
    assert qaoa_expectation(q, [0.0], [0.0]) == pytest.approx(mean)


@given(st.floats(-5, 5), st.floats(-3, 3), st.floats(-3, 3))
def test_qaoa_single_qubit_closed_form(a, gamma, beta):
    q = Qubo(1, {(0, 0): a})
    expected = a / 2 * (1 + np.sin(2 * beta) * np.sin(gamma * a))
    assert qaoa_expectation(q, [gamma], [beta]) == pytest.approx(expected, abs=1e-12)


def test_qaoa_statevector_samples_and_expectation():
    q = random_qubo(np.random.default_rng(8), 6, integer=True)
    r = qaoa_statevector(q, 1, [(0.1, 0.3)], n_shots=512, seed=2)
    assert r.expectation == pytest.approx(qaoa_expectation(q, [0.1], [0.3]))
    assert r.value == evaluate(q, r.x_best) and r.states_visited == 512
    assert qaoa_statevector(q, 1, [(0.1, 0.3)], n_shots=512, seed=2).x_best.tolist() == r.x_best.tolist()
    with pytest.raises(ValueError):
        qaoa_statevector(q, 2, [(0.1, 0.3)])


def test_optimize_with_single_evaluation_returns_origin():
    q = random_qubo(np.random.default_rng(9), 4)
    g, b, val = optimize_qaoa_params(q, 1, SolveBudget(max_evals=1))
    assert g == (0.0,) and b == (0.0,)
    assert val == pytest.approx(np.mean([evaluate(q, x) for x in all_assignments(4)]))


def test_optimized_expectation_not_worse_than_mean():
    q = random_qubo(np.random.default_rng(10), 6, integer=True)
    mean = float(np.mean(energy_table(q)))
    _, _, val = optimize_qaoa_params(q, 2, SolveBudget(max_evals=80))
    assert val <= mean + 1e-12


def test_qaoa_solve_finds_small_optimum():
    q = random_qubo(np.random.default_rng(11), 5, integer=True)
    r = qaoa_solve(q, SolveBudget(max_evals=60, shots=1024))
    assert r.value == exact_enumerate(q).value


def test_qaoa_capacity_and_bad_params():
    with pytest.raises(CapacityError):
        qaoa_state(Qubo(21, {}), [0.1], [0.1])
    with pytest.raises(ValueError):
        qaoa_state(Qubo(2, {}), [np.nan], [0.1])
    with pytest.raises(ValueError):
        qaoa_state(Qubo(2, {}), [0.1, 0.2], [0.1])


def test_get_backend():
    assert get_backend("exact") is exact_enumerate
    with pytest.raises(ValueError):
        get_backend("annealer9000")
