"""Lagrange-multiplier optimizers.

All methods work in the internal minimize frame supplied by
:class:`~slackfree.relaxation.Relaxation`; TSP values are negated on the way in
and restored on the way out, so the step rules below never branch on sense.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import SolverError
from .numkernels import LinearProgram, ProxQp, lp_solve, prox_qp_solve
from .relaxation import FREE, NONNEGATIVE, Multipliers, Relaxation

METHODS = (
    "subgradient",
    "dual_averaging",
    "stochastic_subgradient",
    "bundle",
    "cutting_plane",
    "augmented_lagrangian",
)
SCHEDULES = ("constant", "harmonic", "sqrt", "polyak")


@dataclass(frozen=True)
class StepSchedule:
    kind: str = "sqrt"
    alpha0: float = 1.0
    polyak_target: Optional[float] = None  # internal (minimize) frame
    polyak_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}")
        if not (self.alpha0 > 0 and math.isfinite(self.alpha0)):
            raise ValueError("alpha0 must be positive and finite")
        if not 0 < self.polyak_scale <= 2:
            raise ValueError("polyak_scale must lie in (0, 2]")

    def step(self, k, g=None, s=None) -> float:
        """Step size for iteration ``k >= 1``; always strictly positive."""
        if k < 1:
            raise ValueError("iterations are counted from 1")
        if self.kind == "constant":
            return self.alpha0
        if self.kind == "harmonic":
            return self.alpha0 / k
        if self.kind == "sqrt":
            return self.alpha0 / math.sqrt(k)
        # Polyak: fall back to a harmonic step once the target is reached
        norm2 = float(np.dot(s, s)) if s is not None else 0.0
        if self.polyak_target is None or g is None or norm2 == 0.0 or g <= self.polyak_target:
            return self.alpha0 / k
        return self.polyak_scale * (g - self.polyak_target) / norm2


@dataclass(frozen=True)
class MethodConfig:
    method: str = "subgradient"
    max_iters: int = 500
    tol: float = 1e-6
    schedule: Optional[StepSchedule] = None  # None picks the per-method default
    batch_size: Optional[int] = None  # None means max(1, ceil(dim / 2))
    beta: float = 1.0
    m_l: float = 0.1
    lam_max: Optional[float] = None  # None means 10 * multiplier scale
    mu: float = 1.0
    mu_growth: float = 1.0
    bundle_cap: int = 50
    da_variant: str = "cumulative"
    al_variant: str = "literal"
    al_backend: str = "exact"
    seed: int = 0
    lam0: Optional[tuple] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ValueError("max_iters must be a nonnegative integer")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.m_l < 1:
            raise ValueError("m_l must lie in (0, 1)")
        if self.lam_max is not None and not self.lam_max > 0:
            raise ValueError("lam_max must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.mu_growth >= 1:
            raise ValueError("mu_growth must be >= 1")
        if self.bundle_cap < 1:
            raise ValueError("bundle_cap must be >= 1")
        if self.da_variant not in ("cumulative", "averaged"):
            raise ValueError("da_variant is 'cumulative' or 'averaged'")
        if self.al_variant not in ("literal", "kkt"):
            raise ValueError("al_variant is 'literal' or 'kkt'")

    def default_schedule(self) -> StepSchedule:
        if self.schedule is not None:
            return self.schedule
        if self.method == "dual_averaging":
            return StepSchedule("harmonic", 1.0)
        return StepSchedule("sqrt", 1.0)


@dataclass
class DualState:
    lam: np.ndarray
    domain: str = NONNEGATIVE
    k: int = 0
    cumulative_subgrad: Optional[np.ndarray] = None
    lam0: Optional[np.ndarray] = None
    bundle: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    best_lam: Optional[np.ndarray] = None
    best_dual: float = math.inf  # internal frame
    center: Optional[np.ndarray] = None
    center_value: Optional[float] = None
    model_value: Optional[float] = None
    step_kind: str = "init"
    mu: float = 1.0

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float).copy()
        if self.cumulative_subgrad is None:
            self.cumulative_subgrad = np.zeros_like(self.lam)
        if self.lam0 is None:
            self.lam0 = self.lam.copy()

    def project(self, lam):
        return np.maximum(lam, 0.0) if self.domain == NONNEGATIVE else np.asarray(lam, dtype=float)


def _check_finite(g, s):
    if not math.isfinite(g) or not np.all(np.isfinite(s)):
        raise SolverError(f"non-finite dual oracle output (g={g!r}, s={s!r})")


def _record(state: DualState, g, s):
    """Running minimum over evaluated points."""
    _check_finite(g, s)
    if g < state.best_dual:
        state.best_dual = float(g)
        state.best_lam = state.lam.copy()


def subgradient_step(state: DualState, g, s, alpha) -> DualState:
    if not alpha > 0:
        raise ValueError("step size must be positive")
    _record(state, g, s)
    state.lam = state.project(state.lam - alpha * np.asarray(s, dtype=float))
    state.k += 1
    state.step_kind = "subgradient"
    return state


def dual_averaging_step(state: DualState, g, s, alpha, variant="cumulative") -> DualState:
    if not alpha > 0:
        raise ValueError("step size must be positive")
    _record(state, g, s)
    state.cumulative_subgrad = state.cumulative_subgrad + np.asarray(s, dtype=float)
    state.k += 1
    if variant == "cumulative":
        # lam0 is zero in the textbook form; a nonzero start just shifts the origin
        state.lam = state.project(state.lam0 - alpha * state.cumulative_subgrad)
    elif variant == "averaged":
        state.lam = state.project(state.lam - alpha * state.cumulative_subgrad / state.k)
    else:
        raise ValueError(f"unknown dual-averaging variant {variant!r}")
    state.step_kind = "dual_averaging"
    return state


def stochastic_subgradient_step(state: DualState, g, s, alpha, batch_size, rng) -> DualState:
    dim = len(state.lam)
    if not 1 <= batch_size <= max(dim, 1):
        raise ValueError(f"batch_size {batch_size} outside [1, {dim}]")
    if not alpha > 0:
        raise ValueError("step size must be positive")
    _record(state, g, s)
    batch = rng.choice(dim, size=batch_size, replace=False) if dim else np.zeros(0, dtype=int)
    lam = state.lam.copy()
    lam[batch] = lam[batch] - alpha * np.asarray(s, dtype=float)[batch]
    state.lam = state.project(lam)
    state.k += 1
    state.step_kind = "stochastic"
    return state


def bundle_step(state: DualState, g, s, beta=1.0, m_l=0.1, qp_solver=prox_qp_solve, cap=50) -> DualState:
    """Proximal bundle iteration: classify the point just evaluated, then solve the prox QP."""
    _record(state, g, s)
    lam = state.lam.copy()
    if state.center is None:
        state.center, state.center_value = lam, float(g)
        state.step_kind = "init"
    else:
        predicted = state.center_value - state.model_value
        if g <= state.center_value - m_l * predicted:
            state.center, state.center_value = lam, float(g)
            state.step_kind = "serious"
        else:
            state.step_kind = "null"
    state.bundle.append((float(g), np.asarray(s, dtype=float).copy(), lam))
    if len(state.bundle) > cap:
        del state.bundle[0]
    qp = ProxQp(state.bundle, state.center, beta, nonneg=state.domain == NONNEGATIVE)
    nxt, model_value = qp_solver(qp)
    state.lam = state.project(nxt)
    state.model_value = float(model_value)
    state.k += 1
    return state


def bundle_predicted_decrease(state: DualState) -> float:
    if state.center_value is None or state.model_value is None:
        return math.inf
    return state.center_value - state.model_value


def cutting_plane_step(state: DualState, g, s, lam_max, lp_solver=lp_solve) -> DualState:
    """Kelley step: minimize the cut model over the multiplier box."""
    _record(state, g, s)
    state.cuts.append((float(g), np.asarray(s, dtype=float).copy(), state.lam.copy()))
    d = len(state.lam)
    lo = np.zeros(d) if state.domain == NONNEGATIVE else np.full(d, -float(lam_max))
    hi = np.full(d, float(lam_max))
    # bounds on t from the cut values at the box extremes keep the LP boxed
    t_lo = max(gi + float(np.minimum(si * lo, si * hi).sum() - si @ li) for gi, si, li in state.cuts)
    t_hi = max(gi + float(np.maximum(si * lo, si * hi).sum() - si @ li) for gi, si, li in state.cuts)
    rows = []
    for gi, si, li in state.cuts:
        rows.append((np.concatenate((-si, [1.0])), gi - float(si @ li)))
    lp = LinearProgram(
        objective=np.concatenate((np.zeros(d), [1.0])),
        rows=rows,
        lo=np.concatenate((lo, [t_lo])),
        hi=np.concatenate((hi, [max(t_hi, t_lo)])),
    )
    x, t = lp_solver(lp)
    state.lam = state.project(np.clip(x[:d], lo, hi))
    state.model_value = float(t)
    state.k += 1
    state.step_kind = "cut"
    return state


def mdkp_constraint_form(inst):
    """(p, A, b) for constraints A x <= b with a maximization objective p.x."""
    if inst.kind == "mdkp":
        return inst.profits, inst.weights, inst.capacities
    if inst.kind == "mis":
        return np.ones(inst.n), inst.incidence, np.ones(len(inst.edges))
    raise ValueError("augmented Lagrangian supports MDKP and MIS only")


def augmented_lagrangian_iterate(inst, state: DualState, mu, backend, variant="literal", mu_growth=1.0, budget=None):
    """One primal QUBO solve plus the multiplier update. Returns ``(state, x)``."""
    from .qubo import build_augmented_lagrangian_qubo
    from .solvers import SolveBudget

    if not mu > 0:
        raise ValueError("mu must be positive")
    p, A, b = mdkp_constraint_form(inst)
    sign = 1.0 if variant == "literal" else -1.0
    q = build_augmented_lagrangian_qubo(p, A, b, state.lam, mu, sign=sign)
    res = backend(q, budget or SolveBudget())
    x = np.asarray(res.x_best, dtype=float)
    residual = b - A @ x
    if variant == "literal":
        lam = state.lam + mu * residual
    else:
        lam = state.lam - mu * residual
    state.lam = np.maximum(lam, 0.0)
    state.mu = mu * mu_growth
    state.k += 1
    state.step_kind = "al"
    return state, x.astype(int)


@dataclass(frozen=True)
class TraceRow:
    k: int
    g: float  # natural orientation
    norm_s: float
    step_kind: str
    elapsed_s: float
    model_value: Optional[float] = None  # internal frame, cutting plane / bundle


@dataclass(frozen=True)
class DualResult:
    best_lam: Multipliers
    best_dual: float  # natural orientation
    trace: tuple
    iterations: int
    converged: bool

    def write_trace_csv(self, path):
        write_trace_csv(self.trace, path)


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "g", "norm_s", "step_kind", "elapsed_s"])
        for r in trace:
            w.writerow([r.k, repr(r.g), repr(r.norm_s), r.step_kind, f"{r.elapsed_s:.6f}"])


def resolve_config(relaxation: Relaxation, config: MethodConfig) -> MethodConfig:
    """Fill instance-dependent defaults (lam_max, batch size, Polyak target)."""
    changes = {}
    if config.lam_max is None:
        changes["lam_max"] = 10.0 * relaxation.multiplier_scale()
    if config.batch_size is None:
        changes["batch_size"] = max(1, math.ceil(relaxation.dim / 2))
    sched = config.default_schedule()
    if sched.kind == "polyak" and sched.polyak_target is None:
        sched = replace(sched, polyak_target=relaxation.primal_bound())
    changes["schedule"] = sched
    return replace(config, **changes)


def run_dual_optimization(relaxation: Relaxation, config: MethodConfig = MethodConfig(), backend=None) -> DualResult:
    """Alternate subproblem evaluation and multiplier steps until ``|s| < tol`` or K steps.

    Bundle and cutting-plane runs also stop once their model certifies the
    current best point to within ``tol``.
    """
    if config.method == "augmented_lagrangian" and relaxation.kind == "tsp":
        raise ValueError("augmented Lagrangian is not supported for TSP")
    cfg = resolve_config(relaxation, config)
    lam0 = np.zeros(relaxation.dim) if cfg.lam0 is None else np.asarray(cfg.lam0, dtype=float)
    if lam0.shape != (relaxation.dim,):
        raise ValueError(f"lam0 must have {relaxation.dim} entries")
    lam0 = relaxation.project(lam0)
    state = DualState(lam0, domain=relaxation.domain, mu=cfg.mu)
    rng = np.random.default_rng(cfg.seed)
    sched = cfg.schedule
    if cfg.method == "augmented_lagrangian" and backend is None:
        from .solvers import get_backend

        backend = get_backend(cfg.al_backend)

    t0 = time.perf_counter()
    trace = []
    converged = False

    def evaluate(lam):
        g, s, _ = relaxation.oracle(lam)
        _check_finite(g, s)
        return g, s

    if cfg.max_iters == 0:
        g, _ = evaluate(state.lam)
        return DualResult(Multipliers(state.lam, relaxation.domain), relaxation.natural(g), (), 0, False)

    for k in range(1, cfg.max_iters + 1):
        g, s = evaluate(state.lam)
        norm = float(np.linalg.norm(s))
        if norm < cfg.tol:
            _record(state, g, s)
            trace.append(TraceRow(k, relaxation.natural(g), norm, "stop", time.perf_counter() - t0))
            converged = True
            break
        m = cfg.method
        if m == "subgradient":
            subgradient_step(state, g, s, sched.step(k, g, s))
        elif m == "dual_averaging":
            dual_averaging_step(state, g, s, sched.step(k, g, s), cfg.da_variant)
        elif m == "stochastic_subgradient":
            stochastic_subgradient_step(state, g, s, sched.step(k, g, s), min(cfg.batch_size, relaxation.dim), rng)
        elif m == "bundle":
            bundle_step(state, g, s, cfg.beta, cfg.m_l, cap=cfg.bundle_cap)
        elif m == "cutting_plane":
            cutting_plane_step(state, g, s, cfg.lam_max)
        else:
            _record(state, g, s)
            augmented_lagrangian_iterate(relaxation.inst, state, state.mu, backend, cfg.al_variant, cfg.mu_growth)
        trace.append(
            TraceRow(k, relaxation.natural(g), norm, state.step_kind, time.perf_counter() - t0, state.model_value)
        )
        if m == "bundle" and bundle_predicted_decrease(state) <= cfg.tol * max(1.0, abs(state.center_value)):
            converged = True
            break
        if m == "cutting_plane" and state.best_dual - state.model_value <= cfg.tol * max(1.0, abs(state.best_dual)):
            converged = True
            break

    best = relaxation.project(state.best_lam)
    return DualResult(
        Multipliers(best, relaxation.domain),
        relaxation.natural(state.best_dual),
        tuple(trace),
        len(trace),
        converged,
    )
