"""Feasibility checks, deterministic repair heuristics and reporting metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MetricError


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: list = field(default_factory=list)
    repaired: bool = False


@dataclass(frozen=True)
class Metrics:
    objective: float
    best_known: Optional[float] = None
    opt_gap_pct: Optional[float] = None
    rsq_pct: Optional[float] = None
    qubits_slack: int = 0
    qubits_slackfree: int = 0


# ----------------------------------------------------------------- checking


def _binary(x, size):
    x = np.asarray(x).astype(int)
    if x.shape != (size,):
        raise ValueError(f"expected a vector of length {size}, got shape {x.shape}")
    return x


def edges_from_vector(inst, x):
    x = _binary(x, len(inst.edges))
    return [e for e, v in zip(inst.edges, x) if v]


def edge_vector(inst, edges):
    index = {e: k for k, e in enumerate(inst.edges)}
    x = np.zeros(len(inst.edges), dtype=int)
    for i, j in edges:
        x[index[(min(i, j), max(i, j))]] = 1
    return x


def tour_edges(tour):
    return sorted((min(a, b), max(a, b)) for a, b in zip(tour, tour[1:] + tour[:1]))


def _components(n, edges):
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(sorted(comp))
    return comps, adj


def check_feasibility(inst, x) -> FeasibilityReport:
    """Exact constraint evaluation. For TSP ``x`` indexes ``inst.edges`` and
    must form a single Hamiltonian cycle."""
    viol = []
    if inst.kind == "mdkp":
        x = _binary(x, inst.n)
        excess = inst.usage(x) - inst.capacities
        viol = [(("capacity", j), float(e)) for j, e in enumerate(excess) if e > 0]
    elif inst.kind == "mis":
        x = _binary(x, inst.n)
        viol = [(("edge", e), 1.0) for e in inst.edges if x[e[0]] and x[e[1]]]
    else:
        chosen = edges_from_vector(inst, x)
        deg = np.zeros(inst.n, dtype=int)
        for i, j in chosen:
            deg[i] += 1
            deg[j] += 1
        viol = [(("degree", i), float(abs(d - 2))) for i, d in enumerate(deg) if d != 2]
        if not viol:
            comps, _ = _components(inst.n, chosen)
            if len(comps) > 1:
                viol.append((("connectivity", 0), float(len(comps) - 1)))
    return FeasibilityReport(feasible=not viol, violations=viol)


def check_positions(inst, x) -> FeasibilityReport:
    """Feasibility of a position-encoded TSP assignment (x[i*n + p])."""
    n = inst.n
    X = _binary(x, n * n).reshape(n, n)
    viol = [(("city", i), float(abs(s - 1))) for i, s in enumerate(X.sum(axis=1)) if s != 1]
    viol += [(("position", p), float(abs(s - 1))) for p, s in enumerate(X.sum(axis=0)) if s != 1]
    return FeasibilityReport(feasible=not viol, violations=viol)


def positions_to_edges(inst, x):
    """Visit order read column by column (smallest unused city per position);
    consecutive cities become edges, closing the cycle only when complete."""
    n = inst.n
    X = np.asarray(x).astype(int).reshape(n, n)
    order, used = [], set()
    for p in range(n):
        for i in range(n):
            if X[i, p] and i not in used:
                order.append(i)
                used.add(i)
                break
    edges = {(min(a, b), max(a, b)) for a, b in zip(order, order[1:])}
    if len(order) == n:
        edges.add((min(order[0], order[-1]), max(order[0], order[-1])))
    return sorted(edges)


# ------------------------------------------------------------------ repairs


def _efficiency(inst):
    load = (inst.weights / inst.capacities[:, None]).sum(axis=0)
    with np.errstate(divide="ignore"):
        return np.where(load > 0, inst.profits / np.where(load > 0, load, 1.0), np.inf)


def repair_mdkp(inst, x) -> np.ndarray:
    """Drop the least efficient selected item until feasible, then greedily
    re-add by descending efficiency p_i / sum_j (w_ji / c_j)."""
    x = _binary(x, inst.n).copy()
    eff = _efficiency(inst)
    usage = inst.usage(x)
    while np.any(usage > inst.capacities):
        sel = np.nonzero(x)[0]
        drop = sel[np.argmin(eff[sel])]  # argmin keeps the lowest index on ties
        x[drop] = 0
        usage = usage - inst.weights[:, drop]
    for i in sorted(range(inst.n), key=lambda i: (-eff[i], i)):
        if not x[i] and np.all(usage + inst.weights[:, i] <= inst.capacities):
            x[i] = 1
            usage = usage + inst.weights[:, i]
    return x


def repair_mis(inst, x) -> np.ndarray:
    """Resolve conflicts edge by edge, dropping the endpoint with more selected
    neighbours (lower index on ties), then add free vertices in index order."""
    x = _binary(x, inst.n).copy()
    nb = inst.neighbors
    for i, j in inst.edges:
        if x[i] and x[j]:
            di = sum(x[k] for k in nb[i])
            dj = sum(x[k] for k in nb[j])
            x[j if dj > di else i] = 0
    for v in range(inst.n):
        if not x[v] and not any(x[k] for k in nb[v]):
            x[v] = 1
    return x


def _cycle_order(nodes, adj):
    start = min(nodes)
    order, prev, cur = [start], None, start
    while True:
        nxt = [v for v in sorted(adj[cur]) if v != prev]
        if not nxt or nxt[0] == start:
            break
        prev, cur = cur, nxt[0]
        order.append(cur)
    return order


def _normalize_tour(tour):
    k = tour.index(0)
    t = tour[k:] + tour[:k]
    if len(t) > 2 and t[-1] < t[1]:
        t = [t[0]] + t[1:][::-1]
    return t


def repair_tsp(inst, edges, two_opt=True) -> list:
    """Turn any edge subset into a Hamiltonian cycle.

    1. degree fix: drop the costliest edges at over-degree nodes, then join
       path fragments by their cheapest endpoint-to-endpoint edges;
    2. subtour patching: merge the pair of cycles with the cheapest 2-exchange;
    3. one full 2-opt pass (skipped when ``two_opt`` is False).

    Returns the tour as a node list starting at 0.
    """
    n = inst.n
    C = inst.cost
    E = {(min(i, j), max(i, j)) for i, j in edges if i != j}
    deg = [0] * n
    for i, j in E:
        deg[i] += 1
        deg[j] += 1

    while any(d > 2 for d in deg):
        over = [e for e in E if deg[e[0]] > 2 or deg[e[1]] > 2]
        i, j = min(over, key=lambda e: (-C[e], e))
        E.discard((i, j))
        deg[i] -= 1
        deg[j] -= 1

    comps, adj = _components(n, E)
    cycles, paths = [], []
    for comp in comps:
        if len(comp) >= 3 and all(deg[v] == 2 for v in comp):
            cycles.append(_cycle_order(comp, adj))
        else:
            paths.append(comp)

    # join path fragments greedily by cheapest endpoint pairs
    frag_of = {}
    for k, comp in enumerate(paths):
        for v in comp:
            frag_of[v] = k
    while len(set(frag_of.values())) > 1:
        ends = sorted(v for v in frag_of if deg[v] < 2)
        best = None
        for a_idx, u in enumerate(ends):
            for v in ends[a_idx + 1:]:
                if frag_of[u] != frag_of[v]:
                    key = (C[u, v], u, v)
                    if best is None or key < best:
                        best = key
        _, u, v = best
        E.add((u, v))
        deg[u] += 1
        deg[v] += 1
        old, new = frag_of[v], frag_of[u]
        for w in frag_of:
            if frag_of[w] == old:
                frag_of[w] = new

    leftover = None
    if frag_of:
        nodes = sorted(frag_of)
        ends = [v for v in nodes if deg[v] < 2]
        if len(nodes) >= 3:
            u, v = ends
            E.add((u, v))
            cycles.append(_cycle_order(nodes, _components(n, E)[1]))
        else:
            leftover = nodes

    cycles = [list(c) for c in cycles]
    if leftover is not None:
        best = None
        for ci, cyc in enumerate(cycles):
            for k in range(len(cyc)):
                a, b = cyc[k], cyc[(k + 1) % len(cyc)]
                if len(leftover) == 1:
                    (v,) = leftover
                    opts = [((C[a, v] + C[v, b] - C[a, b]), [v])]
                else:
                    u, v = leftover
                    opts = [(C[a, u] + C[v, b] - C[a, b], [u, v]), (C[a, v] + C[u, b] - C[a, b], [v, u])]
                for delta, seq in opts:
                    key = (delta, ci, k, seq)
                    if best is None or key < best:
                        best = key
        _, ci, k, seq = best
        cycles[ci] = cycles[ci][:k + 1] + seq + cycles[ci][k + 1:]

    while len(cycles) > 1:
        best = None
        for ai in range(len(cycles)):
            A = cycles[ai]
            for bi in range(ai + 1, len(cycles)):
                B = cycles[bi]
                for p in range(len(A)):
                    a1, a2 = A[p], A[(p + 1) % len(A)]
                    for q in range(len(B)):
                        b1, b2 = B[q], B[(q + 1) % len(B)]
                        base = C[a1, a2] + C[b1, b2]
                        for flip, delta in ((0, C[a1, b1] + C[a2, b2] - base), (1, C[a1, b2] + C[a2, b1] - base)):
                            key = (delta, ai, bi, p, q, flip)
                            if best is None or key < best:
                                best = key
        _, ai, bi, p, q, flip = best
        A, B = cycles[ai], cycles[bi]
        # walk A ending at a1, then B starting at the node a1 reconnects to
        A_rot = A[p + 1:] + A[:p + 1]  # starts at a2, ends at a1
        if flip == 0:
            # a1-b1 and a2-b2: after a1 go to b1, walk B backwards to b2
            B_rot = B[q::-1] + B[:q:-1]
        else:
            # a1-b2 and a2-b1: after a1 go to b2, walk B forwards to b1
            B_rot = B[q + 1:] + B[:q + 1]
        merged = A_rot + B_rot
        cycles = [c for k, c in enumerate(cycles) if k not in (ai, bi)] + [merged]

    tour = cycles[0]
    if two_opt:
        tour = two_opt_pass(inst, tour)
    return _normalize_tour(tour)


def two_opt_pass(inst, tour) -> list:
    """One sweep over all non-adjacent edge pairs, applying each improving move."""
    C = inst.cost
    t = list(tour)
    n = len(t)
    for i in range(n - 1):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            a, b, c, d = t[i], t[i + 1], t[j], t[(j + 1) % n]
            if C[a, c] + C[b, d] - C[a, b] - C[c, d] < -1e-9:
                t[i + 1:j + 1] = t[i + 1:j + 1][::-1]
    return t


def greedy_tour(inst) -> list:
    return repair_tsp(inst, ())


# ------------------------------------------------------------------ metrics


def opt_gap_pct(best, obtained) -> float:
    """(best - obtained) / best * 100 (maximization convention)."""
    if best == 0:
        raise MetricError("optimality gap undefined for best = 0")
    return (best - obtained) / best * 100.0


def tsp_gap_pct(best, obtained) -> float:
    """(obtained - best) / best * 100, nonnegative for suboptimal tours."""
    if best == 0:
        raise MetricError("optimality gap undefined for best = 0")
    return (obtained - best) / best * 100.0


def rsq_pct(obtained, best) -> float:
    if best == 0:
        raise MetricError("RSQ undefined for best = 0")
    return obtained / best * 100.0


def compute_metrics(kind, objective, best_known, qubits) -> Metrics:
    gap = rsq = None
    if best_known is not None:
        if kind == "mis":
            rsq = rsq_pct(objective, best_known)
        elif kind == "tsp":
            gap = tsp_gap_pct(best_known, objective)
        else:
            gap = opt_gap_pct(best_known, objective)
    return Metrics(objective, best_known, gap, rsq, qubits[0], qubits[1])
