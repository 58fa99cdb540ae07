"""QUBO minimization backends behind one contract: ``backend(qubo, budget) -> SolveResult``.

* ``exact``: Gray-code enumeration with O(n) incremental energy updates.
* ``sa``: single-flip Metropolis simulated annealing with a geometric schedule.
* ``qaoa``: dense statevector simulation of a QAOA-style circuit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np

from .errors import CapacityError
from .qubo import Qubo

EXACT_LIMIT = 28
STATEVECTOR_LIMIT = 20


@dataclass(frozen=True)
class SolveBudget:
    sweeps: int = 1000
    restarts: int = 8
    time_cap: Optional[float] = None
    seed: int = 0
    layers: int = 1
    shots: int = 1024
    max_evals: int = 200

    def __post_init__(self):
        for name in ("sweeps", "restarts", "layers", "shots", "max_evals"):
            if getattr(self, name) < 1:
                raise ValueError(f"budget field {name} must be positive")


@dataclass
class SolveResult:
    x_best: np.ndarray
    value: float
    states_visited: int
    wall_time: float
    backend: str
    expectation: Optional[float] = None
    params: Optional[tuple] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "x_best": [int(v) for v in self.x_best],
            "value": self.value,
            "states_visited": int(self.states_visited),
            "wall_time": self.wall_time,
            "backend": self.backend,
        }
        if self.expectation is not None:
            out["expectation"] = self.expectation
        return out


def _pair_and_diag(q: Qubo):
    U = q.matrix
    diag = np.diag(U).copy()
    off = np.triu(U, 1)
    return off + off.T, diag


def _lex_less(a, b) -> bool:
    return tuple(a) < tuple(b)


# -------------------------------------------------------------------- exact


@nb.njit(cache=True)
def _gray_kernel(P, d, tol):
    n = d.shape[0]
    x = np.zeros(n, dtype=np.int8)
    field_ = np.zeros(n)
    e = 0.0
    best_e = 0.0
    best_key = np.int64(0)
    key = np.int64(0)
    total = np.int64(1) << n
    for t in range(1, total):
        k = 0
        while not (t >> k) & 1:
            k += 1
        if x[k] == 0:
            e += d[k] + field_[k]
            x[k] = 1
            sgn = 1.0
            key += np.int64(1) << (n - 1 - k)
        else:
            e -= d[k] + field_[k]
            x[k] = 0
            sgn = -1.0
            key -= np.int64(1) << (n - 1 - k)
        for j in range(n):
            field_[j] += sgn * P[j, k]
        if e < best_e - tol or (e <= best_e + tol and key < best_key):
            best_e = e
            best_key = key
    return best_key, best_e


@nb.njit(cache=True)
def _gray_trace_kernel(P, d):
    n = d.shape[0]
    total = np.int64(1) << n
    masks = np.zeros(total, dtype=np.int64)
    energies = np.zeros(total)
    x = np.zeros(n, dtype=np.int8)
    field_ = np.zeros(n)
    e = 0.0
    mask = np.int64(0)
    for t in range(1, total):
        k = 0
        while not (t >> k) & 1:
            k += 1
        if x[k] == 0:
            e += d[k] + field_[k]
            x[k] = 1
            sgn = 1.0
        else:
            e -= d[k] + field_[k]
            x[k] = 0
            sgn = -1.0
        mask ^= np.int64(1) << k
        for j in range(n):
            field_[j] += sgn * P[j, k]
        masks[t] = mask
        energies[t] = e
    return masks, energies


def gray_code_trace(q: Qubo):
    """Every assignment in Gray-code visiting order with its incrementally
    maintained energy (offset included). Bit i of each mask is x_i."""
    if q.n_vars > STATEVECTOR_LIMIT:
        raise CapacityError("gray_code_trace", q.n_vars, STATEVECTOR_LIMIT)
    P, d = _pair_and_diag(q)
    masks, energies = _gray_trace_kernel(P, d)
    return masks, energies + q.offset


def _key_to_x(key, n):
    return np.array([(key >> (n - 1 - i)) & 1 for i in range(n)], dtype=int)


def exact_enumerate(q: Qubo, budget: SolveBudget = None) -> SolveResult:
    """Global minimum over all 2^n assignments; ties go to the lexicographically
    smallest bitstring (x_0 most significant)."""
    if q.n_vars > EXACT_LIMIT:
        raise CapacityError("exact", q.n_vars, EXACT_LIMIT)
    start = time.perf_counter()
    n = q.n_vars
    if n == 0:
        return SolveResult(np.zeros(0, dtype=int), q.offset, 1, 0.0, "exact")
    P, d = _pair_and_diag(q)
    scale = float(np.abs(P).sum() / 2 + np.abs(d).sum())
    key, _ = _gray_kernel(P, d, 1e-12 * max(1.0, scale))
    x = _key_to_x(int(key), n)
    return SolveResult(x, q.evaluate(x), 1 << n, time.perf_counter() - start, "exact")


# ------------------------------------------------------- simulated annealing


@nb.njit(cache=True)
def _anneal_kernel(P, d, x0, temps, uniforms):
    n = d.shape[0]
    x = x0.copy()
    field_ = P @ x.astype(np.float64)
    e = 0.0
    for i in range(n):
        if x[i]:
            e += d[i] + 0.5 * field_[i]
    best_e = e
    best_x = x.copy()
    for s in range(temps.shape[0]):
        T = temps[s]
        for i in range(n):
            delta = d[i] + field_[i]
            if x[i] == 1:
                delta = -delta
            if delta <= 0.0 or uniforms[s, i] < np.exp(-delta / T):
                sgn = 1.0 if x[i] == 0 else -1.0
                x[i] = 1 - x[i]
                e += delta
                for j in range(n):
                    field_[j] += sgn * P[j, i]
                if e < best_e:
                    best_e = e
                    best_x[:] = x
    return best_x, best_e


def initial_temperature(q: Qubo, rng, samples=1000) -> float:
    """95th percentile of |dE| over random single flips from random states."""
    P, d = _pair_and_diag(q)
    n = q.n_vars
    xs = rng.integers(0, 2, size=(samples, n))
    ks = rng.integers(0, n, size=samples)
    local = d[ks] + np.einsum("ij,ij->i", P[ks], xs)
    t0 = float(np.percentile(np.abs(local), 95))
    return t0 if t0 > 0 else 1.0


def simulated_anneal(q: Qubo, budget: SolveBudget = SolveBudget()) -> SolveResult:
    """Independent chains seeded by (seed, chain); best chain wins, ties by
    lexicographic state."""
    start = time.perf_counter()
    n = q.n_vars
    if n == 0:
        return SolveResult(np.zeros(0, dtype=int), q.offset, 0, 0.0, "sa")
    P, d = _pair_and_diag(q)
    t0 = initial_temperature(q, np.random.default_rng([budget.seed, 1 << 20]))
    temps = t0 * (1e-3) ** (np.arange(budget.sweeps) / max(1, budget.sweeps - 1))
    best_x, best_e = None, np.inf
    chains = 0
    for chain in range(budget.restarts):
        if budget.time_cap is not None and chain > 0 and time.perf_counter() - start > budget.time_cap:
            break
        rng = np.random.default_rng([budget.seed, chain])
        x0 = rng.integers(0, 2, size=n).astype(np.int8)
        uniforms = rng.random((budget.sweeps, n))
        x, e = _anneal_kernel(P, d, x0, temps, uniforms)
        x = x.astype(int)
        e = q.evaluate(x)
        chains += 1
        if e < best_e or (e == best_e and _lex_less(x, best_x)):
            best_x, best_e = x, e
    return SolveResult(best_x, q.evaluate(best_x), chains * budget.sweeps * n,
                       time.perf_counter() - start, "sa")


# ------------------------------------------------------------------- QAOA


def energy_table(q: Qubo) -> np.ndarray:
    """E(x) for every basis index; bit i of the index is x_i."""
    n = q.n_vars
    idx = np.arange(1 << n, dtype=np.int64)
    E = np.full(1 << n, q.offset)
    bits = {}

    def bit(i):
        if i not in bits:
            bits[i] = ((idx >> i) & 1).astype(float)
        return bits[i]

    for (i, j), v in q.coeffs.items():
        E += v * (bit(i) if i == j else bit(i) * bit(j))
    return E


def _apply_mixer(state, n, beta):
    c, s = np.cos(beta), np.sin(beta)
    for i in range(n):
        view = state.reshape(1 << (n - 1 - i), 2, 1 << i)
        a0 = view[:, 0, :].copy()
        a1 = view[:, 1, :]
        view[:, 0, :] = c * a0 - 1j * s * a1
        view[:, 1, :] = -1j * s * a0 + c * a1
    return state


def qaoa_state(q: Qubo, gammas, betas, energies=None) -> np.ndarray:
    n = q.n_vars
    if n > STATEVECTOR_LIMIT:
        raise CapacityError("qaoa", n, STATEVECTOR_LIMIT)
    if len(gammas) != len(betas):
        raise ValueError("need one (gamma, beta) pair per layer")
    if not np.all(np.isfinite(np.concatenate([np.ravel(gammas), np.ravel(betas)]))):
        raise ValueError("QAOA parameters must be finite")
    E = energy_table(q) if energies is None else energies
    state = np.full(1 << n, (1 << n) ** -0.5, dtype=complex)
    for g, b in zip(gammas, betas):
        state *= np.exp(-1j * g * E)
        _apply_mixer(state, n, b)
    return state


def qaoa_expectation(q: Qubo, gammas, betas, energies=None) -> float:
    E = energy_table(q) if energies is None else energies
    state = qaoa_state(q, gammas, betas, E)
    return float(np.abs(state) ** 2 @ E)


def qaoa_statevector(q: Qubo, layers, params, n_shots=1024, seed=0) -> SolveResult:
    """Run the circuit once; ``params`` is a sequence of (gamma, beta) per layer.

    The result carries the exact expectation and the best of ``n_shots``
    seeded samples from the final state.
    """
    start = time.perf_counter()
    params = list(params)
    if len(params) != layers:
        raise ValueError(f"expected {layers} (gamma, beta) pairs, got {len(params)}")
    gammas = [float(g) for g, _ in params]
    betas = [float(b) for _, b in params]
    E = energy_table(q) if q.n_vars <= STATEVECTOR_LIMIT else None
    state = qaoa_state(q, gammas, betas, E)
    probs = np.abs(state) ** 2
    expectation = float(probs @ E)
    rng = np.random.default_rng(seed)
    probs = probs / probs.sum()
    shots = np.unique(rng.choice(len(probs), size=n_shots, p=probs))
    n = q.n_vars
    best = min(shots, key=lambda s: (E[s], tuple((s >> i) & 1 for i in range(n))))
    x = np.array([(best >> i) & 1 for i in range(n)], dtype=int)
    return SolveResult(x, q.evaluate(x), n_shots, time.perf_counter() - start, "qaoa",
                       expectation=expectation, params=tuple(zip(gammas, betas)))


def _gamma_range(q: Qubo) -> float:
    P, d = _pair_and_diag(q)
    scale = float(np.max(np.abs(d) + np.abs(P).sum(axis=1))) if q.n_vars else 1.0
    return np.pi / scale if scale > 0 else np.pi


def optimize_qaoa_params(q: Qubo, layers, budget: SolveBudget = SolveBudget(), grid=8):
    """Coarse grid over a shared (gamma, beta), then pattern search on all
    2*layers parameters. Returns ``(gammas, betas, expectation)``.

    The grid starts at the origin, so the result is never worse than the
    uniform-superposition mean energy.
    """
    if layers < 1:
        raise ValueError("need at least one layer")
    if q.n_vars > STATEVECTOR_LIMIT:
        raise CapacityError("qaoa", q.n_vars, STATEVECTOR_LIMIT)
    E = energy_table(q)
    gmax = _gamma_range(q)
    evals = 0
    best = None

    def f(theta):
        nonlocal evals, best
        evals += 1
        val = qaoa_expectation(q, theta[:layers], theta[layers:], E)
        if best is None or val < best[1]:
            best = (theta.copy(), val)
        return val

    # seeded shuffle of the grid interior keeps the origin first
    rng = np.random.default_rng(budget.seed)
    pts = [(gi * gmax / grid, bi * (np.pi / 2) / grid) for gi in range(grid) for bi in range(grid)]
    pts = pts[:1] + [pts[k] for k in 1 + rng.permutation(len(pts) - 1)]
    for g, b in pts:
        if evals >= budget.max_evals:
            break
        f(np.array([g] * layers + [b] * layers))

    steps = np.array([gmax / grid] * layers + [np.pi / 2 / grid] * layers) / 2
    while evals < budget.max_evals and steps.max() > 1e-6:
        improved = False
        for k in range(2 * layers):
            for sgn in (1.0, -1.0):
                if evals >= budget.max_evals:
                    break
                trial = best[0].copy()
                trial[k] += sgn * steps[k]
                prev = best[1]
                if f(trial) < prev:
                    improved = True
        if not improved:
            steps /= 2
    theta, val = best
    return tuple(map(float, theta[:layers])), tuple(map(float, theta[layers:])), float(val)


def qaoa_solve(q: Qubo, budget: SolveBudget = SolveBudget()) -> SolveResult:
    """Optimize parameters, then sample the optimized circuit."""
    start = time.perf_counter()
    gammas, betas, _ = optimize_qaoa_params(q, budget.layers, budget)
    res = qaoa_statevector(q, budget.layers, list(zip(gammas, betas)), budget.shots, budget.seed)
    res.wall_time = time.perf_counter() - start
    return res


BACKENDS = {
    "exact": exact_enumerate,
    "sa": lambda q, budget=SolveBudget(): simulated_anneal(q, budget),
    "qaoa": lambda q, budget=SolveBudget(): qaoa_solve(q, budget),
}

CAPACITY = {"exact": EXACT_LIMIT, "sa": None, "qaoa": STATEVECTOR_LIMIT}


def get_backend(name):
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
