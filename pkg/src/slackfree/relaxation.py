"""Lagrangian subproblems for MDKP, MIS (closed form) and TSP (Held-Karp 1-tree).

Every evaluator returns a :class:`SubproblemSolution` in the problem's natural
orientation: MDKP/MIS give the convex dual g(lambda) to be minimized, TSP gives
the concave Held-Karp bound to be maximized. :class:`Relaxation` wraps an
instance and flips the TSP sign so the dual optimizers only ever minimize.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInstanceError
from .instances import MdkpInstance, MisInstance, TspInstance

FREE = "free"
NONNEGATIVE = "nonnegative"
MINIMIZE_DUAL = "minimize_dual"
MAXIMIZE_DUAL = "maximize_dual"


@dataclass(frozen=True)
class Multipliers:
    values: np.ndarray
    domain: str = NONNEGATIVE

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("multipliers must be a vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("multipliers must be finite")
        if self.domain not in (FREE, NONNEGATIVE):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == NONNEGATIVE and np.any(v < 0):
            raise ValueError("negative multiplier in nonnegative domain")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SubproblemSolution:
    x: np.ndarray  # binary items/vertices, or edge indicator over inst.edges for TSP
    dual_value: float
    subgrad: np.ndarray
    degrees: Optional[np.ndarray] = None
    edges: Optional[tuple] = None  # TSP only: the 1-tree as (i, j) pairs


@dataclass(frozen=True)
class DualOrientation:
    sense: str
    domain: str

    @property
    def sign(self) -> float:
        """Multiplier taking natural values into the internal minimize frame."""
        return 1.0 if self.sense == MINIMIZE_DUAL else -1.0

    def to_internal(self, g, s):
        return self.sign * g, self.sign * np.asarray(s, dtype=float)

    # negation is an involution, so the inverse is the same map
    from_internal = to_internal


def dual_orientation(problem_kind) -> DualOrientation:
    if problem_kind in ("mdkp", "mis"):
        return DualOrientation(MINIMIZE_DUAL, NONNEGATIVE)
    if problem_kind == "tsp":
        return DualOrientation(MAXIMIZE_DUAL, FREE)
    raise ValueError(f"unknown problem kind {problem_kind!r}")


def _check(lam, dim, domain):
    v = lam.values if isinstance(lam, Multipliers) else np.asarray(lam, dtype=float)
    if v.shape != (dim,):
        raise ValueError(f"expected {dim} multipliers, got shape {v.shape}")
    if domain == NONNEGATIVE and np.any(v < 0):
        raise ValueError("negative multiplier in nonnegative domain")
    return v


def mdkp_subproblem(inst: MdkpInstance, lam) -> SubproblemSolution:
    lam = _check(lam, inst.m, NONNEGATIVE)
    reduced = inst.profits - lam @ inst.weights
    # strict threshold: zero reduced profit leaves the item out
    x = (reduced > 0).astype(int)
    g = float(lam @ inst.capacities + np.maximum(reduced, 0.0).sum())
    s = inst.capacities - inst.weights @ x
    return SubproblemSolution(x=x, dual_value=g, subgrad=s)


def mis_subproblem(inst: MisInstance, lam) -> SubproblemSolution:
    lam = _check(lam, len(inst.edges), NONNEGATIVE)
    A = inst.incidence
    reduced = 1.0 - lam @ A if len(lam) else np.ones(inst.n)
    x = (reduced > 0).astype(int)
    g = float(np.maximum(reduced, 0.0).sum() + lam.sum())
    s = 1.0 - A @ x if len(lam) else np.zeros(0)
    return SubproblemSolution(x=x, dual_value=g, subgrad=s)


class _DSU:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, u):
        while self.parent[u] != u:
            self.parent[u] = self.parent[self.parent[u]]
            u = self.parent[u]
        return u

    def union(self, u, v):
        ru, rv = self.find(u), self.find(v)
        if ru == rv:
            return False
        self.parent[rv] = ru
        return True


def hk_one_tree(inst: TspInstance, lam) -> SubproblemSolution:
    """Minimum 1-tree under costs c_ij - lam_i - lam_j, node 0 as the special node.

    Kruskal over nodes 1..n-1 with edges ordered by (cost, i, j), then the two
    cheapest edges at node 0 ordered by (cost, j): equal-cost ties always
    resolve to the lexicographically smallest edge.
    """
    n = inst.n
    if n < 3:
        raise InvalidInstanceError("1-tree needs n >= 3")
    lam = _check(lam, n, FREE)
    mod = inst.cost - lam[:, None] - lam[None, :]

    cand = sorted((mod[i, j], i, j) for i in range(1, n) for j in range(i + 1, n))
    dsu = _DSU(n)
    tree = []
    for _, i, j in cand:
        if dsu.union(i, j):
            tree.append((i, j))
            if len(tree) == n - 2:
                break
    at_root = sorted((mod[0, j], j) for j in range(1, n))[:2]
    tree += [(0, j) for _, j in at_root]
    tree.sort()

    deg = np.zeros(n, dtype=int)
    for i, j in tree:
        deg[i] += 1
        deg[j] += 1
    value = float(sum(mod[i, j] for i, j in tree) + 2.0 * lam.sum())
    index = {e: k for k, e in enumerate(inst.edges)}
    x = np.zeros(len(inst.edges), dtype=int)
    for e in tree:
        x[index[e]] = 1
    return SubproblemSolution(x=x, dual_value=value, subgrad=2.0 - deg, degrees=deg, edges=tuple(tree))


class Relaxation:
    """Dual oracle for one instance in the internal minimize frame.

    ``oracle(lam)`` returns ``(g, s, sol)`` with ``g``/``s`` already oriented
    for minimization; ``sol`` is the untouched natural-orientation solution.
    """

    def __init__(self, inst):
        self.inst = inst
        self.kind = inst.kind
        self.orientation = dual_orientation(self.kind)
        self.domain = self.orientation.domain
        if self.kind == "mdkp":
            self.dim = inst.m
            self._solve = mdkp_subproblem
        elif self.kind == "mis":
            self.dim = len(inst.edges)
            self._solve = mis_subproblem
        else:
            self.dim = inst.n
            self._solve = hk_one_tree

    def evaluate(self, lam) -> SubproblemSolution:
        return self._solve(self.inst, lam)

    def oracle(self, lam):
        sol = self._solve(self.inst, lam)
        g, s = self.orientation.to_internal(sol.dual_value, sol.subgrad)
        return g, s, sol

    def natural(self, g):
        """Internal dual value back to the natural orientation."""
        return self.orientation.sign * g

    def multiplier_scale(self) -> float:
        """Magnitude beyond which a single multiplier switches everything off."""
        inst = self.inst
        if self.kind == "mdkp":
            W = inst.weights
            ratios = [inst.p[i] / W[j, i] for j in range(inst.m) for i in range(inst.n) if W[j, i] > 0]
            return max(ratios) if ratios else 1.0
        if self.kind == "mis":
            return 1.0
        return float(inst.cost.max()) or 1.0

    def project(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.maximum(lam, 0.0) if self.domain == NONNEGATIVE else lam

    def primal_bound(self) -> float:
        """Objective of a quick feasible solution, in the internal minimize frame.

        g(lambda) >= primal optimum for MDKP/MIS, so a feasible objective is a
        valid Polyak target; for TSP the bound sits below every tour, so the
        negated tour length plays the same role.
        """
        from .postprocess import greedy_tour, repair_mdkp, repair_mis

        inst = self.inst
        if self.kind == "mdkp":
            return inst.objective(repair_mdkp(inst, np.zeros(inst.n, dtype=int)))
        if self.kind == "mis":
            return inst.objective(repair_mis(inst, np.zeros(inst.n, dtype=int)))
        return -float(inst.tour_length(greedy_tour(inst)))


def lagrangian_value(inst, x, lam) -> float:
    """L(x, lambda) at an arbitrary binary point, for cross-checking evaluators."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if inst.kind == "mdkp":
        return float(inst.profits @ x - lam @ (inst.weights @ x - inst.capacities))
    if inst.kind == "mis":
        return float(x.sum() - lam @ (inst.incidence @ x - 1.0))
    total = 2.0 * lam.sum()
    for k, (i, j) in enumerate(inst.edges):
        total += (inst.cost[i, j] - lam[i] - lam[j]) * x[k]
    return float(total)
