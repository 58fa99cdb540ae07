"""Acceptance criteria, one test per criterion.

Each test is tagged with a ``criterion`` marker; conftest prints a PASS/FAIL
line per criterion at the end of the session.
"""

import itertools
import math
import time

import numpy as np
import pytest

from slackfree import bench
from slackfree.dualopt import METHODS, MethodConfig, run_dual_optimization
from slackfree.instances import generate_mdkp, generate_mis, generate_tsp
from slackfree.numkernels import ProxQp, prox_qp_solve
from slackfree.qubo import Qubo, build_mdkp_slack_qubo, qubit_count, qubit_count_for
from slackfree.relaxation import Relaxation, hk_one_tree, mdkp_subproblem, mis_subproblem
from slackfree.solvers import exact_enumerate, gray_code_trace, qaoa_expectation, qaoa_state

SUITE_METHODS = bench.PIPELINE_METHODS


def _binary_matrix(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64).reshape(-1, n)


def _bits_needed(c):
    b = 0
    while 2**b - 1 < c:
        b += 1
    return b


# ---------------------------------------------------------------------- 1


@pytest.mark.criterion(1, "qubit-count reproduction")
def test_criterion_1_qubit_counts(record_property):
    t0 = time.perf_counter()
    table = {5: (25, 10), 6: (36, 15), 7: (49, 21), 8: (64, 28), 9: (81, 36), 10: (100, 45)}
    got = {n: qubit_count_for("tsp", n) for n in table}
    assert got == table
    for n in range(1, 40):
        assert qubit_count_for("mis", n) == (n, n)
        assert qubit_count(generate_mis(n, 0.3, n)) == (n, n)
    assert qubit_count_for("mdkp", 50, [1000] * 5)[1] == 50
    rng = np.random.default_rng(0)
    for _ in range(300):
        n, m = int(rng.integers(1, 60)), int(rng.integers(1, 6))
        caps = [int(c) for c in rng.integers(1, 10**6, size=m)]
        assert qubit_count_for("mdkp", n, caps) == (n + sum(_bits_needed(c) for c in caps), n)
    for seed in range(30):
        inst = generate_mdkp(int(rng.integers(1, 15)), int(rng.integers(1, 4)), seed)
        assert build_mdkp_slack_qubo(inst).n_vars == inst.n + sum(_bits_needed(int(c)) for c in inst.c)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"TSP 5..10 table exact, MDKP formula on 330 cases, pet2 file not available; {elapsed:.2f}s")
    assert elapsed < 1.0


# ---------------------------------------------------------------------- 2


@pytest.mark.criterion(2, "exact knapsack dual, every dual method")
def test_criterion_2_knapsack_dual(knapsack, record_property):
    t0 = time.perf_counter()
    rel = Relaxation(knapsack)
    results = {}
    for method in METHODS:
        res = run_dual_optimization(rel, MethodConfig(method))
        results[method] = (float(res.best_lam.values[0]), res.best_dual)
    elapsed = time.perf_counter() - t0
    bad = {m: v for m, v in results.items() if abs(v[0] - 1.5) > 1e-3 or abs(v[1] - 13.0) > 5e-2}
    summary = ", ".join(f"{m} lam={l:.4g} g={g:.5g}" for m, (l, g) in results.items())
    print(summary)
    record_property("detail", f"outside tolerance: {sorted(bad)}; {elapsed:.1f}s" if bad else f"{elapsed:.1f}s")
    assert not bad, summary
    assert elapsed < 10.0


# ---------------------------------------------------------------------- 3


@pytest.mark.criterion(3, "weak duality on random MDKP, MIS, TSP")
def test_criterion_3_weak_duality(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    checks = 0
    for k in range(50):
        inst = generate_mdkp(int(rng.integers(1, 13)), int(rng.integers(1, 4)), 1000 + k)
        X = _binary_matrix(inst.n)
        ok = np.all(X @ inst.weights.T <= inst.capacities, axis=1)
        best = float((X[ok] @ inst.profits).max())
        for _ in range(20):
            lam = rng.uniform(0, 5, size=inst.m)
            assert mdkp_subproblem(inst, lam).dual_value >= best - 1e-9
            checks += 1
    for k in range(30):
        inst = generate_mis(int(rng.integers(1, 13)), float(rng.uniform(0.1, 0.8)), 2000 + k)
        X = _binary_matrix(inst.n)
        ok = np.ones(len(X), dtype=bool)
        for i, j in inst.edges:
            ok &= X[:, i] + X[:, j] <= 1
        best = float(X[ok].sum(axis=1).max())
        for _ in range(20):
            lam = rng.uniform(0, 2, size=len(inst.edges))
            assert mis_subproblem(inst, lam).dual_value >= best - 1e-9
            checks += 1
    for k in range(20):
        inst = generate_tsp(int(rng.integers(3, 9)), 3000 + k)
        best = min(inst.tour_length([0, *p]) for p in itertools.permutations(range(1, inst.n)))
        for _ in range(20):
            lam = rng.uniform(-300, 300, size=inst.n)
            assert hk_one_tree(inst, lam).dual_value <= best + 1e-9
            checks += 1
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{checks} bound checks; {elapsed:.1f}s")
    assert elapsed < 120.0


# ---------------------------------------------------------------------- 4


def _cutting_plane_runs():
    from slackfree.instances import MdkpInstance

    yield Relaxation(MdkpInstance("k3", 3, 1, (10, 6, 4), ((5, 4, 3),), (7,)))
    for seed in range(20):
        yield Relaxation(generate_mdkp(8, 3, 400 + seed))
    for seed in range(10):
        yield Relaxation(generate_mis(10, 0.3, 500 + seed))
    for seed in range(10):
        yield Relaxation(generate_tsp(6, 600 + seed))


@pytest.mark.criterion(4, "cutting-plane model underestimates evaluated values")
def test_criterion_4_cutting_plane_underestimation(record_property):
    rows = 0
    for rel in _cutting_plane_runs():
        res = run_dual_optimization(rel, MethodConfig("cutting_plane", max_iters=60))
        low = math.inf
        for row in res.trace:
            g_internal = -row.g if rel.kind == "tsp" else row.g
            low = min(low, g_internal)
            if row.model_value is not None:
                assert row.model_value <= low + 1e-7
                rows += 1
    record_property("detail", f"{rows} iterations over 41 runs")


# ---------------------------------------------------------------------- 5


@pytest.mark.criterion(5, "single-cut prox QP closed form")
def test_criterion_5_bundle_closed_form(record_property):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 20))
        center = np.maximum(0.0, rng.normal(size=d) * rng.choice([1, 10]))
        s = rng.normal(size=d) * rng.choice([0.1, 1, 100])
        beta = float(rng.choice([0.01, 0.5, 1.0, 7.0]))
        lam, _ = prox_qp_solve(ProxQp([(float(rng.normal()), s, rng.normal(size=d))], center, beta))
        err = float(np.max(np.abs(lam - np.maximum(0.0, center - s / beta))))
        worst = max(worst, err)
    record_property("detail", f"max deviation {worst:.2e} over 100 cases")
    assert worst <= 1e-6


# ---------------------------------------------------------------------- 6


def _naive_energy(q, x):
    return q.offset + sum(v * x[i] * x[j] for (i, j), v in q.coeffs.items())


@pytest.mark.criterion(6, "Gray-code enumerator equals naive enumeration")
def test_criterion_6_exact_backend(record_property):
    rng = np.random.default_rng(6)
    steps = 0
    for _ in range(100):
        n = int(rng.integers(1, 13))
        coeffs = {(i, j): float(rng.integers(-20, 21)) for i in range(n) for j in range(i, n) if rng.random() < 0.6}
        q = Qubo(n, coeffs, float(rng.integers(-5, 6)))
        masks, energies = gray_code_trace(q)
        naive = {}
        for mask, e in zip(masks.tolist(), energies.tolist()):
            x = [(mask >> i) & 1 for i in range(n)]
            ref = _naive_energy(q, x)
            assert e == ref
            naive[tuple(x)] = ref
            steps += 1
        assert len(naive) == 2**n
        best = min(naive.values())
        first = min(x for x, e in naive.items() if e == best)  # lexicographic, x_0 first
        res = exact_enumerate(q)
        assert res.value == best and tuple(res.x_best.tolist()) == first
    record_property("detail", f"{steps} incremental steps compared")


# ---------------------------------------------------------------------- 7


@pytest.mark.criterion(7, "statevector norm, p=0 mean, one-qubit evolution")
def test_criterion_7_statevector(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(60):
        n, p = int(rng.integers(1, 11)), int(rng.integers(1, 4))
        coeffs = {(i, j): float(rng.normal()) for i in range(n) for j in range(i, n) if rng.random() < 0.5}
        q = Qubo(n, coeffs, float(rng.normal()))
        state = qaoa_state(q, rng.uniform(-np.pi, np.pi, p), rng.uniform(-np.pi, np.pi, p))
        assert abs(np.linalg.norm(state) - 1.0) <= 1e-10
        X = _binary_matrix(n)
        mean = float(np.mean([q.evaluate(x) for x in X]))
        assert abs(qaoa_expectation(q, [], []) - mean) <= 1e-9
    for _ in range(50):
        a, gamma, beta = rng.normal() * 3, rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi, np.pi)
        q = Qubo(1, {(0, 0): float(a)})
        # |+> -> diag(1, e^{-i gamma a}) -> exp(-i beta X): P(x=1) = (1 + sin 2beta sin gamma a) / 2
        expected = a / 2 * (1 + np.sin(2 * beta) * np.sin(gamma * a))
        assert abs(qaoa_expectation(q, [gamma], [beta]) - expected) <= 1e-9
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{elapsed:.1f}s")
    assert elapsed < 60.0


# ------------------------------------------------------------------ 8-10


@pytest.fixture(scope="module")
def bundled_run():
    cfg = bench.bundled_suite(methods=SUITE_METHODS, seeds=(0, 1, 2, 3, 4), parallelism=1)
    t0 = time.perf_counter()
    records = bench.run_suite(cfg, write=False)
    return cfg, records, time.perf_counter() - t0


@pytest.mark.criterion(8, "end-to-end feasibility on the bundled suite")
def test_criterion_8_feasibility(bundled_run, record_property):
    cfg, records, elapsed = bundled_run
    kinds = [k for _, k in cfg.instances]
    assert (kinds.count("mdkp"), kinds.count("tsp"), kinds.count("mis")) == (8, 6, 4)
    slack_free = [r for r in records if r.method != "slack_qubo"]
    baseline = [r for r in records if r.method == "slack_qubo"]
    ql = [r for r in baseline if r.status == "Q.L"]
    infeasible = [r.key() for r in slack_free if not r.feasible_repaired]
    record_property(
        "detail",
        f"{len(slack_free) - len(infeasible)}/{len(slack_free)} slack-free rows feasible; "
        f"slack baseline {len(ql)}/{len(baseline)} rows over capacity (Q.L); {elapsed:.0f}s",
    )
    assert not infeasible, infeasible[:5]
    assert all(r.feasible_repaired for r in baseline if r.status == "ok")
    assert all(r.status in ("ok", "Q.L") for r in records)
    assert elapsed < 300.0


@pytest.mark.criterion(9, "subgradient median MDKP gap <= slack baseline")
def test_criterion_9_trend(bundled_run, record_property):
    _, records, _ = bundled_run
    mdkp = [r for r in records if r.problem == "mdkp"]
    sub = bench.median_gap(mdkp, "subgradient")
    slack = bench.median_gap(mdkp, "slack_qubo")
    # rows where the slack formulation fits the exact backend, compared like for like
    fits = {r.instance for r in mdkp if r.method == "slack_qubo" and r.status == "ok"}
    sub_fit = bench.median_gap([r for r in mdkp if r.instance in fits], "subgradient")
    slack_fit = bench.median_gap([r for r in mdkp if r.instance in fits], "slack_qubo")
    record_property(
        "detail",
        f"median gap subgradient {sub:.2f}% vs slack {slack:.2f}% (Q.L counted as 100%); "
        f"on the {len(fits)} instances that fit: {sub_fit:.2f}% vs {slack_fit:.2f}%",
    )
    assert sub <= slack


@pytest.mark.criterion(10, "records independent of parallelism")
def test_criterion_10_determinism(bundled_run, record_property):
    cfg, serial, _ = bundled_run
    t0 = time.perf_counter()
    parallel = bench.run_suite(bench.dataclasses.replace(cfg, parallelism=8), write=False)
    elapsed = time.perf_counter() - t0
    a = {r.key(): r.without_times() for r in serial}
    b = {r.key(): r.without_times() for r in parallel}
    record_property("detail", f"{len(a)} records compared; parallel run {elapsed:.0f}s")
    assert a == b and len(a) == len(serial)
    assert elapsed < 120.0
