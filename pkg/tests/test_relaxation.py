import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slackfree.instances import MisInstance, TspInstance, generate_mdkp, generate_mis, generate_tsp
from slackfree.relaxation import (
    FREE,
    MAXIMIZE_DUAL,
    MINIMIZE_DUAL,
    NONNEGATIVE,
    Multipliers,
    Relaxation,
    dual_orientation,
    hk_one_tree,
    lagrangian_value,
    mdkp_subproblem,
    mis_subproblem,
)

from .conftest import all_assignments


def brute_dual(inst, lam):
    """max over binary x of the Lagrangian, by enumeration."""
    return max(lagrangian_value(inst, x, lam) for x in all_assignments(inst.n))


def all_one_trees(inst, lam):
    """Every 1-tree: a spanning tree on nodes 1..n-1 plus two edges at node 0."""
    n = inst.n
    C = inst.cost - np.add.outer(lam, lam)
    inner = [(i, j) for i in range(1, n) for j in range(i + 1, n)]
    for tree in itertools.combinations(inner, n - 2):
        parent = list(range(n))

        def find(u):
            while parent[u] != u:
                u = parent[u]
            return u

        ok = True
        for i, j in tree:
            a, b = find(i), find(j)
            if a == b:
                ok = False
                break
            parent[a] = b
        if not ok:
            continue
        for a, b in itertools.combinations(range(1, n), 2):
            yield sum(C[i, j] for i, j in tree) + C[0, a] + C[0, b] + 2 * lam.sum()


def brute_tour(inst):
    n = inst.n
    return min(inst.tour_length([0, *perm]) for perm in itertools.permutations(range(1, n)))


# ---------------------------------------------------------------- MDKP


def test_mdkp_zero_multiplier(knapsack):
    sol = mdkp_subproblem(knapsack, [0.0])
    assert sol.x.tolist() == [1, 1, 1] and sol.dual_value == 20


def test_mdkp_huge_multiplier(knapsack):
    sol = mdkp_subproblem(knapsack, [1e6])
    assert sol.x.tolist() == [0, 0, 0] and sol.dual_value == pytest.approx(7e6)


def test_mdkp_at_optimum_strict_tie(knapsack):
    sol = mdkp_subproblem(knapsack, [1.5])
    assert sol.x.tolist() == [1, 0, 0]
    assert sol.dual_value == pytest.approx(13.0)
    assert sol.dual_value == pytest.approx(brute_dual(knapsack, np.array([1.5])))
    assert sol.subgrad.tolist() == [2]


def test_mdkp_rejects_bad_multipliers(knapsack):
    with pytest.raises(ValueError):
        mdkp_subproblem(knapsack, [-0.1])
    with pytest.raises(ValueError):
        mdkp_subproblem(knapsack, [0.1, 0.2])


@given(st.integers(1, 8), st.integers(1, 3), st.integers(0, 500), st.data())
def test_mdkp_value_matches_enumeration(n, m, seed, data):
    inst = generate_mdkp(n, m, seed)
    lam = np.array(data.draw(st.lists(st.floats(0, 5), min_size=m, max_size=m)))
    sol = mdkp_subproblem(inst, lam)
    assert sol.dual_value == pytest.approx(brute_dual(inst, lam), abs=1e-9)
    assert sol.dual_value == pytest.approx(lagrangian_value(inst, sol.x, lam), abs=1e-9)


# ----------------------------------------------------------------- MIS


def test_mis_zero_multiplier():
    inst = generate_mis(6, 0.5, 1)
    sol = mis_subproblem(inst, np.zeros(len(inst.edges)))
    assert sol.x.tolist() == [1] * 6 and sol.dual_value == 6


def test_mis_single_edge_threshold():
    inst = MisInstance("e", 2, ((0, 1),))
    sol = mis_subproblem(inst, [1.0])
    assert sol.x.tolist() == [0, 0] and sol.dual_value == 1 and sol.subgrad.tolist() == [1]


def test_mis_triangle():
    inst = MisInstance("tri", 3, ((0, 1), (0, 2), (1, 2)))
    lam = np.array([0.4, 0.4, 0.4])
    sol = mis_subproblem(inst, lam)
    assert sol.x.tolist() == [1, 1, 1]
    assert sol.subgrad.tolist() == [-1, -1, -1]
    assert sol.dual_value == pytest.approx(1.8)
    assert sol.dual_value == pytest.approx(brute_dual(inst, lam))


@given(st.integers(2, 8), st.floats(0.1, 0.9), st.integers(0, 500), st.data())
def test_mis_value_matches_enumeration(n, p, seed, data):
    inst = generate_mis(n, p, seed)
    k = len(inst.edges)
    lam = np.array(data.draw(st.lists(st.floats(0, 2), min_size=k, max_size=k)))
    assert mis_subproblem(inst, lam).dual_value == pytest.approx(brute_dual(inst, lam), abs=1e-9)


# ----------------------------------------------------------------- TSP


def test_uniform_costs_give_n_times_w():
    inst = TspInstance("u", 5, tuple((0, 0) for _ in range(5)), tuple(tuple(0 if i == j else 7 for j in range(5)) for i in range(5)))
    assert hk_one_tree(inst, np.zeros(5)).dual_value == 35


def test_rectangle_one_tree_matches_enumeration():
    inst = TspInstance.from_coords("rect", [(0, 0), (3, 0), (0, 4), (3, 4)])
    lam = np.zeros(4)
    assert hk_one_tree(inst, lam).dual_value == pytest.approx(min(all_one_trees(inst, lam)))


@given(st.integers(3, 7), st.integers(0, 500), st.data())
def test_one_tree_structure_and_optimality(n, seed, data):
    inst = generate_tsp(n, seed)
    lam = np.array(data.draw(st.lists(st.floats(-300, 300), min_size=n, max_size=n)))
    sol = hk_one_tree(inst, lam)
    assert len(sol.edges) == n
    assert sol.degrees[0] == 2
    assert sol.subgrad.sum() == 0
    assert sol.x.sum() == n
    assert sol.dual_value == pytest.approx(min(all_one_trees(inst, lam)), abs=1e-7)


def test_one_tree_is_deterministic_under_ties():
    inst = TspInstance.from_coords("sq", [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])
    a = hk_one_tree(inst, np.zeros(5))
    b = hk_one_tree(inst, np.zeros(5))
    assert a.edges == b.edges


def test_tsp_needs_three_nodes():
    with pytest.raises(Exception):
        TspInstance.from_coords("two", [(0, 0), (1, 1)])


# ------------------------------------------------------------ orientation


def test_orientation_per_kind():
    assert dual_orientation("mdkp").sense == MINIMIZE_DUAL
    assert dual_orientation("mis").domain == NONNEGATIVE
    assert dual_orientation("tsp").sense == MAXIMIZE_DUAL
    assert dual_orientation("tsp").domain == FREE
    with pytest.raises(ValueError):
        dual_orientation("vrp")


def test_orientation_involution():
    o = dual_orientation("tsp")
    g, s = o.from_internal(*o.to_internal(3.5, np.array([1.0, -2.0])))
    assert g == 3.5 and s.tolist() == [1.0, -2.0]


def test_multipliers_validation():
    with pytest.raises(ValueError):
        Multipliers([-1.0])
    assert len(Multipliers([-1.0], FREE)) == 1
    with pytest.raises(ValueError):
        Multipliers([np.nan])


# ------------------------------------------------------------- properties


@given(st.integers(1, 8), st.integers(1, 3), st.integers(0, 500), st.data())
def test_mdkp_weak_duality_convexity_subgradient(n, m, seed, data):
    inst = generate_mdkp(n, m, seed)
    best = max(inst.objective(x) for x in all_assignments(n) if np.all(inst.usage(x) <= inst.capacities))
    vec = st.lists(st.floats(0, 5), min_size=m, max_size=m).map(np.array)
    l1, l2 = data.draw(vec), data.draw(vec)
    th = data.draw(st.floats(0.01, 0.99))
    s1 = mdkp_subproblem(inst, l1)
    g2 = mdkp_subproblem(inst, l2).dual_value
    assert s1.dual_value >= best - 1e-9
    assert mdkp_subproblem(inst, th * l1 + (1 - th) * l2).dual_value <= th * s1.dual_value + (1 - th) * g2 + 1e-9
    assert g2 >= s1.dual_value + s1.subgrad @ (l2 - l1) - 1e-9


@given(st.integers(2, 8), st.floats(0.1, 0.9), st.integers(0, 500), st.data())
def test_mis_subgradient_inequality(n, p, seed, data):
    inst = generate_mis(n, p, seed)
    k = len(inst.edges)
    vec = st.lists(st.floats(0, 2), min_size=k, max_size=k).map(np.array)
    l1, l2 = data.draw(vec), data.draw(vec)
    s1 = mis_subproblem(inst, l1)
    assert mis_subproblem(inst, l2).dual_value >= s1.dual_value + s1.subgrad @ (l2 - l1) - 1e-9


@given(st.integers(3, 7), st.integers(0, 300), st.data())
def test_tsp_bound_and_supergradient(n, seed, data):
    inst = generate_tsp(n, seed)
    vec = st.lists(st.floats(-200, 200), min_size=n, max_size=n).map(np.array)
    l1, l2 = data.draw(vec), data.draw(vec)
    s1 = hk_one_tree(inst, l1)
    assert s1.dual_value <= brute_tour(inst) + 1e-9
    assert hk_one_tree(inst, l2).dual_value <= s1.dual_value + s1.subgrad @ (l2 - l1) + 1e-9


def test_relaxation_wrapper_negates_tsp():
    inst = generate_tsp(5, 1)
    rel = Relaxation(inst)
    lam = np.linspace(-5, 5, 5)
    g, s, sol = rel.oracle(lam)
    assert g == -sol.dual_value and np.array_equal(s, -sol.subgrad)
    assert rel.natural(g) == sol.dual_value
    assert rel.dim == 5 and rel.domain == FREE


def test_primal_bound_is_feasible_objective(knapsack):
    # the repaired empty selection keeps item 0 (best ratio) then nothing else fits
    assert Relaxation(knapsack).primal_bound() == 10
    assert Relaxation(knapsack).multiplier_scale() == 2.0
