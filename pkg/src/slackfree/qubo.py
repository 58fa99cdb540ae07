"""QUBO construction for TSP, MDKP and MIS in slack-based and slack-free forms.

A :class:`Qubo` is always a minimization problem ``x^T U x + offset`` over
binary ``x`` with ``U`` upper triangular; diagonal entries are the linear
terms because ``x_i^2 = x_i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .relaxation import Multipliers


@dataclass(frozen=True)
class Qubo:
    n_vars: int
    coeffs: dict
    offset: float = 0.0
    var_map: tuple = ()
    sense: str = field(default="minimize", init=False)

    def __post_init__(self):
        for (i, j) in self.coeffs:
            if not (0 <= i <= j < self.n_vars):
                raise ValueError(f"coefficient key {(i, j)} must satisfy 0 <= i <= j < n_vars")
        if self.var_map and len(self.var_map) != self.n_vars:
            raise ValueError("var_map must label every variable")

    @cached_property
    def matrix(self) -> np.ndarray:
        U = np.zeros((self.n_vars, self.n_vars))
        for (i, j), v in self.coeffs.items():
            U[i, j] += v
        return U

    @cached_property
    def symmetric(self) -> np.ndarray:
        """Q with Q_ii = U_ii and Q_ij = Q_ji = U_ij for i < j."""
        U = self.matrix
        off = np.triu(U, 1)
        return off + off.T + np.diag(np.diag(U))

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            raise ValueError(f"assignment has length {x.size}, QUBO has {self.n_vars} variables")
        return float(x @ self.matrix @ x + self.offset)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_vars": self.n_vars,
                "terms": [[i, j, v] for (i, j), v in sorted(self.coeffs.items())],
                "offset": self.offset,
                "var_map": [list(label) for label in self.var_map],
            }
        )

    @classmethod
    def from_json(cls, text) -> "Qubo":
        doc = json.loads(text)
        coeffs = {}
        for i, j, v in doc["terms"]:
            key = (min(i, j), max(i, j))
            coeffs[key] = coeffs.get(key, 0.0) + v
        var_map = tuple(tuple(label) for label in doc.get("var_map", []))
        return cls(int(doc["n_vars"]), coeffs, float(doc.get("offset", 0.0)), var_map)


@dataclass(frozen=True)
class IsingModel:
    h: np.ndarray
    J: dict
    offset: float = 0.0

    def evaluate(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(self.h @ z + sum(v * z[i] * z[j] for (i, j), v in self.J.items()) + self.offset)


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weights; ``None`` means the per-instance default."""

    P: Optional[float] = None
    lam1: Optional[float] = None
    lam2: Optional[float] = None
    rho_deg: Optional[float] = None
    rho_conflict: Optional[float] = None

    def __post_init__(self):
        for name in ("P", "lam1", "lam2", "rho_deg", "rho_conflict"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"penalty {name} must be positive, got {v}")


class _Terms:
    """Accumulates quadratic terms; normalizes keys to i <= j."""

    def __init__(self, n):
        self.n = n
        self.c = {}
        self.offset = 0.0

    def add(self, i, j, v):
        if v == 0:
            return
        key = (i, j) if i <= j else (j, i)
        self.c[key] = self.c.get(key, 0.0) + v

    def add_square(self, lin, const, scale):
        """scale * (sum_k lin[k] x_k + const)^2, using x^2 = x."""
        items = sorted(lin.items())
        for a, (i, wi) in enumerate(items):
            self.add(i, i, scale * (wi * wi + 2.0 * const * wi))
            for j, wj in items[a + 1:]:
                self.add(i, j, 2.0 * scale * wi * wj)
        self.offset += scale * const * const

    def build(self, var_map) -> Qubo:
        coeffs = {k: float(v) for k, v in self.c.items() if v != 0}
        return Qubo(self.n, coeffs, float(self.offset), tuple(var_map))


def slack_bits(c) -> int:
    """Bits b with 2^b - 1 >= c, i.e. ceil(log2(c + 1))."""
    if c != int(c) or c < 1:
        raise ValueError(f"slack encoding needs an integer capacity >= 1, got {c}")
    return int(c).bit_length()


# --------------------------------------------------------------------- MDKP


def default_mdkp_penalty(inst) -> float:
    return 1.0 + float(sum(inst.p))


def build_mdkp_slack_qubo(inst, pc: PenaltyConfig = PenaltyConfig()) -> Qubo:
    P = pc.P if pc.P is not None else default_mdkp_penalty(inst)
    bits = [slack_bits(c) for c in inst.c]
    n_vars = inst.n + sum(bits)
    t = _Terms(n_vars)
    var_map = [("item", i) for i in range(inst.n)]
    for i in range(inst.n):
        t.add(i, i, -float(inst.p[i]))
    pos = inst.n
    for j in range(inst.m):
        lin = {i: float(inst.w[j][i]) for i in range(inst.n) if inst.w[j][i] != 0}
        for k in range(bits[j]):
            lin[pos + k] = float(2 ** k)
            var_map.append(("slack", j, k))
        pos += bits[j]
        t.add_square(lin, -float(inst.c[j]), P)
    return t.build(var_map)


def build_mdkp_slackfree_qubo(inst, lam) -> Qubo:
    """minimize -(sum_i [p_i - sum_j lam_j w_ji] x_i + sum_j lam_j c_j)."""
    lam = lam.values if isinstance(lam, Multipliers) else np.asarray(lam, dtype=float)
    if lam.shape != (inst.m,) or np.any(lam < 0):
        raise ValueError("slack-free MDKP QUBO needs m nonnegative multipliers")
    reduced = inst.profits - lam @ inst.weights
    t = _Terms(inst.n)
    for i in range(inst.n):
        t.add(i, i, -float(reduced[i]))
    t.offset = -float(lam @ inst.capacities)
    return t.build([("item", i) for i in range(inst.n)])


def build_mdkp_unbalanced_qubo(inst, lam1=1.0, lam2=1.0) -> Qubo:
    """-sum p x + sum_j [-lam1 h_j + lam2 h_j^2], h_j = sum_i w_ji x_i - c_j."""
    if not (lam1 > 0 and lam2 > 0):
        raise ValueError("unbalanced penalty weights must be positive")
    t = _Terms(inst.n)
    for i in range(inst.n):
        t.add(i, i, -float(inst.p[i]))
    for j in range(inst.m):
        lin = {i: float(inst.w[j][i]) for i in range(inst.n) if inst.w[j][i] != 0}
        for i, wi in lin.items():
            t.add(i, i, -lam1 * wi)
        t.offset += lam1 * float(inst.c[j])
        t.add_square(lin, -float(inst.c[j]), lam2)
    return t.build([("item", i) for i in range(inst.n)])


def build_augmented_lagrangian_qubo(p, A, b, lam, mu, sign=1.0) -> Qubo:
    """-p.x + sign * sum_j lam_j (b_j - A_j x) + mu/2 sum_j (b_j - A_j x)^2.

    ``sign=+1`` is the literal displayed form; ``sign=-1`` gives the textbook
    ``lam.(A x - b)`` penalty used by the ``kkt`` variant.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    t = _Terms(n)
    for i in range(n):
        t.add(i, i, -float(p[i]) - sign * float(lam @ A[:, i]))
    t.offset += sign * float(lam @ b)
    for j in range(A.shape[0]):
        lin = {i: -float(A[j, i]) for i in range(n) if A[j, i] != 0}
        t.add_square(lin, float(b[j]), 0.5 * mu)
    return t.build([("item", i) for i in range(n)])


# ---------------------------------------------------------------------- TSP


def default_tsp_onehot_penalty(inst) -> float:
    return 1.0 + inst.n * float(inst.cost.max())


def build_tsp_slack_qubo(inst, pc: PenaltyConfig = PenaltyConfig()) -> Qubo:
    """Position encoding: x[i*n + p] = 1 iff city i is visited at step p."""
    n = inst.n
    A = pc.P if pc.P is not None else default_tsp_onehot_penalty(inst)
    t = _Terms(n * n)

    def v(i, p):
        return i * n + p

    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for p in range(n):
                t.add(v(i, p), v(j, (p + 1) % n), float(inst.dist[i][j]))
    for i in range(n):
        t.add_square({v(i, p): 1.0 for p in range(n)}, -1.0, A)
    for p in range(n):
        t.add_square({v(i, p): 1.0 for i in range(n)}, -1.0, A)
    return t.build([("pos", i, p) for i in range(n) for p in range(n)])


def default_rho_deg(inst, lam) -> float:
    lam = np.asarray(lam, dtype=float)
    mod = inst.cost - lam[:, None] - lam[None, :]
    iu = np.triu_indices(inst.n, 1)
    return 1.0 + 2.0 * float(np.abs(mod[iu]).max())


def build_tsp_slackfree_qubo(inst, lam, pc: PenaltyConfig = PenaltyConfig()) -> Qubo:
    """Edge variables over inst.edges with Held-Karp costs and a degree-2 penalty."""
    lam = lam.values if isinstance(lam, Multipliers) else np.asarray(lam, dtype=float)
    if lam.shape != (inst.n,):
        raise ValueError("TSP QUBO needs one multiplier per city")
    rho = pc.rho_deg if pc.rho_deg is not None else default_rho_deg(inst, lam)
    edges = inst.edges
    t = _Terms(len(edges))
    for k, (i, j) in enumerate(edges):
        t.add(k, k, float(inst.cost[i, j] - lam[i] - lam[j]))
    t.offset += 2.0 * float(lam.sum())
    for node in range(inst.n):
        incident = {k: 1.0 for k, e in enumerate(edges) if node in e}
        t.add_square(incident, -2.0, rho)
    return t.build([("edge", i, j) for i, j in edges])


# ---------------------------------------------------------------------- MIS


def build_mis_qubo(inst, lam=None, pc: PenaltyConfig = PenaltyConfig()) -> Qubo:
    """Slack variant when ``lam`` is None, slack-free Lagrangian variant otherwise."""
    t = _Terms(inst.n)
    if lam is None:
        P = pc.P if pc.P is not None else 2.0
        for i in range(inst.n):
            t.add(i, i, -1.0)
        for i, j in inst.edges:
            t.add(i, j, P)
    else:
        lam = lam.values if isinstance(lam, Multipliers) else np.asarray(lam, dtype=float)
        if lam.shape != (len(inst.edges),) or np.any(lam < 0):
            raise ValueError("MIS QUBO needs one nonnegative multiplier per edge")
        rho = pc.rho_conflict if pc.rho_conflict is not None else 1.0
        reduced = 1.0 - lam @ inst.incidence if len(lam) else np.ones(inst.n)
        for i in range(inst.n):
            t.add(i, i, -float(reduced[i]))
        t.offset -= float(lam.sum())
        for i, j in inst.edges:
            t.add(i, j, rho)
    return t.build([("vertex", i) for i in range(inst.n)])


# ------------------------------------------------------------- qubit counts


def qubit_count_for(problem, n, capacities=None):
    """(slack-based, slack-free) variable counts."""
    if problem == "tsp":
        return n * n, n * (n - 1) // 2
    if problem == "mdkp":
        if capacities is None:
            raise ValueError("MDKP slack count needs the capacities")
        return n + sum(slack_bits(c) for c in capacities), n
    if problem == "mis":
        return n, n
    raise ValueError(f"unknown problem {problem!r}")


def qubit_count(inst):
    return qubit_count_for(inst.kind, inst.n, getattr(inst, "c", None))


# -------------------------------------------------------------------- Ising


def to_ising(q: Qubo) -> IsingModel:
    """Substitute x_i = (1 - z_i) / 2."""
    h = np.zeros(q.n_vars)
    J = {}
    offset = q.offset
    for (i, j), v in q.coeffs.items():
        if i == j:
            offset += v / 2.0
            h[i] -= v / 2.0
        else:
            offset += v / 4.0
            h[i] -= v / 4.0
            h[j] -= v / 4.0
            J[(i, j)] = J.get((i, j), 0.0) + v / 4.0
    return IsingModel(h, J, offset)


def evaluate(q: Qubo, x) -> float:
    return q.evaluate(x)
