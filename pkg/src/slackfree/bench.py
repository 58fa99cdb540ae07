"""End-to-end pipeline runs, suites and report artifacts.

One run: dual loop -> lambda* -> slack-free QUBO -> one backend solve ->
repair -> metrics. The ``slack_qubo`` method skips the dual loop and solves
the slack formulation directly; it is the baseline the dual pipelines are
compared against.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import os
import statistics
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .dualopt import METHODS, MethodConfig, run_dual_optimization
from .errors import CapacityError, InvalidInstanceError
from .instances import load_instance
from .postprocess import (
    check_feasibility,
    check_positions,
    compute_metrics,
    edge_vector,
    edges_from_vector,
    positions_to_edges,
    repair_mdkp,
    repair_mis,
    repair_tsp,
    tour_edges,
)
from .qubo import (
    PenaltyConfig,
    build_mdkp_slack_qubo,
    build_mdkp_slackfree_qubo,
    build_mdkp_unbalanced_qubo,
    build_mis_qubo,
    build_tsp_slack_qubo,
    build_tsp_slackfree_qubo,
    qubit_count,
)
from .relaxation import Relaxation
from .solvers import SolveBudget, get_backend

log = logging.getLogger(__name__)

SCHEMA = "slackfree-results/1"
GAP_CONVENTION = "mdkp: (best - obtained) / best * 100; tsp: (obtained - best) / best * 100; mis: rsq = obtained / best * 100"
BASELINES = ("slack_qubo", "unbalanced")
PIPELINE_METHODS = METHODS + BASELINES
COLUMNS = (
    "instance",
    "problem",
    "method",
    "backend",
    "seed",
    "qubits_slack",
    "qubits_slackfree",
    "dual_iterations",
    "best_dual",
    "objective_raw",
    "objective_repaired",
    "feasible_raw",
    "feasible_repaired",
    "metric_kind",
    "metric_value",
    "classical_time_s",
    "solver_time_s",
    "status",
)
TIME_COLUMNS = ("classical_time_s", "solver_time_s")
BRUTE_FORCE_LIMIT = 22


@dataclass(frozen=True)
class RunRecord:
    instance: str
    problem: str
    method: str
    backend: str
    seed: int
    qubits_slack: int
    qubits_slackfree: int
    dual_iterations: int = 0
    best_dual: Optional[float] = None
    objective_raw: Optional[float] = None
    objective_repaired: Optional[float] = None
    feasible_raw: bool = False
    feasible_repaired: bool = False
    metric_kind: str = ""
    metric_value: Optional[float] = None
    classical_time_s: float = 0.0
    solver_time_s: float = 0.0
    status: str = "ok"

    def __post_init__(self):
        if self.classical_time_s < 0 or self.solver_time_s < 0:
            raise ValueError("times must be nonnegative")
        expected = "rsq_pct" if self.problem == "mis" else "opt_gap_pct"
        if self.metric_kind not in ("", expected):
            raise ValueError(f"{self.problem} records report {expected}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def key(self):
        return (self.instance, self.method, self.backend, self.seed)

    def without_times(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in TIME_COLUMNS}


# ------------------------------------------------------------ best known


def _all_binary(n):
    return ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(np.int64)


def held_karp_tour_length(inst) -> int:
    """Exact TSP optimum by the O(n^2 2^n) subset DP."""
    n = inst.n
    C = inst.cost
    full = 1 << (n - 1)
    INF = float("inf")
    dp = np.full((full, n), INF)
    for j in range(1, n):
        dp[1 << (j - 1), j] = C[0, j]
    for mask in range(1, full):
        for j in range(1, n):
            v = dp[mask, j]
            if v == INF or not mask >> (j - 1) & 1:
                continue
            for k in range(1, n):
                if mask >> (k - 1) & 1:
                    continue
                nm = mask | 1 << (k - 1)
                if v + C[j, k] < dp[nm, k]:
                    dp[nm, k] = v + C[j, k]
    return int(min(dp[full - 1, j] + C[j, 0] for j in range(1, n)))


def brute_force_best(inst) -> Optional[float]:
    """Exact optimum for small instances, None when too large to enumerate."""
    if inst.kind == "tsp":
        return float(held_karp_tour_length(inst)) if inst.n <= 13 else None
    if inst.n > BRUTE_FORCE_LIMIT:
        return None
    X = _all_binary(inst.n)
    if inst.kind == "mdkp":
        ok = np.all(X @ inst.weights.T <= inst.capacities, axis=1)
        return float((X[ok] @ inst.profits).max())
    ok = np.ones(len(X), dtype=bool)
    for i, j in inst.edges:
        ok &= ~((X[:, i] == 1) & (X[:, j] == 1))
    return float(X[ok].sum(axis=1).max())


def best_known_for(inst) -> Optional[float]:
    bk = inst.best_known
    return float(bk) if bk is not None else brute_force_best(inst)


# -------------------------------------------------------------- pipeline


def _build_qubo(inst, method, lam, pc: PenaltyConfig):
    kind = inst.kind
    if method == "slack_qubo":
        if kind == "mdkp":
            return build_mdkp_slack_qubo(inst, pc)
        if kind == "tsp":
            return build_tsp_slack_qubo(inst, pc)
        return build_mis_qubo(inst, None, pc)
    if method == "unbalanced":
        if kind != "mdkp":
            raise InvalidInstanceError("unbalanced penalization is defined for MDKP only")
        return build_mdkp_unbalanced_qubo(inst, pc.lam1 or 1.0, pc.lam2 or 1.0)
    if kind == "mdkp":
        return build_mdkp_slackfree_qubo(inst, lam)
    if kind == "tsp":
        return build_tsp_slackfree_qubo(inst, lam, pc)
    return build_mis_qubo(inst, lam, pc)


def _decode_and_repair(inst, method, x):
    """Returns (objective_raw, feasible_raw, objective_repaired, feasible_repaired)."""
    x = np.asarray(x, dtype=int)
    if inst.kind == "mdkp":
        items = x[: inst.n]
        fixed = repair_mdkp(inst, items)
        return (
            float(inst.objective(items)),
            check_feasibility(inst, items).feasible,
            float(inst.objective(fixed)),
            check_feasibility(inst, fixed).feasible,
        )
    if inst.kind == "mis":
        fixed = repair_mis(inst, x)
        return (
            float(inst.objective(x)),
            check_feasibility(inst, x).feasible,
            float(inst.objective(fixed)),
            check_feasibility(inst, fixed).feasible,
        )
    if method == "slack_qubo":
        feasible_raw = check_positions(inst, x).feasible
        edges = positions_to_edges(inst, x)
    else:
        edges = edges_from_vector(inst, x)
        feasible_raw = check_feasibility(inst, x).feasible
    raw = float(sum(inst.cost[i, j] for i, j in edges))
    tour = repair_tsp(inst, edges)
    fixed = edge_vector(inst, tour_edges(tour))
    return raw, feasible_raw, float(inst.tour_length(tour)), check_feasibility(inst, fixed).feasible


def run_pipeline(
    inst,
    method,
    backend="exact",
    seed=0,
    method_overrides=None,
    penalty: PenaltyConfig = PenaltyConfig(),
    budget: Optional[SolveBudget] = None,
    best_known=None,
) -> RunRecord:
    if method not in PIPELINE_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {PIPELINE_METHODS}")
    if method == "augmented_lagrangian" and inst.kind == "tsp":
        raise ValueError("augmented Lagrangian is not supported for TSP")
    solve = get_backend(backend)
    qs, qf = qubit_count(inst)
    base = dict(
        instance=inst.name,
        problem=inst.kind,
        method=method,
        backend=backend,
        seed=int(seed),
        qubits_slack=qs,
        qubits_slackfree=qf,
    )
    if best_known is None:
        best_known = best_known_for(inst)

    t0 = time.perf_counter()
    lam, iters, best_dual = None, 0, None
    if method not in BASELINES:
        cfg = MethodConfig(method=method, seed=int(seed), **(method_overrides or {}))
        res = run_dual_optimization(Relaxation(inst), cfg)
        lam, iters, best_dual = res.best_lam, res.iterations, float(res.best_dual)
    q = _build_qubo(inst, method, lam, penalty)
    classical = time.perf_counter() - t0
    base.update(dual_iterations=iters, best_dual=best_dual)

    budget = dataclasses.replace(budget or SolveBudget(), seed=int(seed))
    t1 = time.perf_counter()
    try:
        result = solve(q, budget)
    except CapacityError:
        return RunRecord(**base, classical_time_s=classical, solver_time_s=0.0, status="Q.L")
    solver_time = time.perf_counter() - t1

    t2 = time.perf_counter()
    raw, feas_raw, fixed, feas_fixed = _decode_and_repair(inst, method, result.x_best)
    classical += time.perf_counter() - t2

    metric_kind = "rsq_pct" if inst.kind == "mis" else "opt_gap_pct"
    metric_value = None
    if best_known is not None and feas_fixed:
        m = compute_metrics(inst.kind, fixed, best_known, (qs, qf))
        metric_value = m.rsq_pct if inst.kind == "mis" else m.opt_gap_pct
    return RunRecord(
        **base,
        objective_raw=raw,
        objective_repaired=fixed,
        feasible_raw=bool(feas_raw),
        feasible_repaired=bool(feas_fixed),
        metric_kind=metric_kind,
        metric_value=metric_value,
        classical_time_s=classical,
        solver_time_s=solver_time,
        status="ok",
    )


# ----------------------------------------------------------------- suites


@dataclass(frozen=True)
class SuiteConfig:
    instances: tuple = ()  # (path, kind-or-None) pairs
    methods: tuple = ("subgradient",)
    backends: tuple = ("exact",)
    seeds: tuple = (0, 1, 2, 3, 4)
    method_overrides: dict = field(default_factory=dict)
    penalty_overrides: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    parallelism: int = 1

    def __post_init__(self):
        insts = []
        for item in self.instances:
            if isinstance(item, str):
                item = (item, None)
            elif isinstance(item, dict):
                extra = set(item) - {"path", "kind"}
                if extra:
                    raise ValueError(f"unknown instance keys {sorted(extra)}")
                item = (item["path"], item.get("kind"))
            path, kind = item
            if not os.path.isfile(path):
                raise FileNotFoundError(f"instance file not found: {path}")
            insts.append((str(path), kind))
        object.__setattr__(self, "instances", tuple(insts))
        for name in ("methods", "backends", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for m in self.methods:
            if m not in PIPELINE_METHODS:
                raise ValueError(f"unknown method {m!r}")
        for b in self.backends:
            get_backend(b)
        known = {f.name for f in dataclasses.fields(MethodConfig)} - {"method", "seed"}
        bad = set(self.method_overrides) - known
        if bad:
            raise ValueError(f"unknown method override keys {sorted(bad)}")
        PenaltyConfig(**self.penalty_overrides)
        SolveBudget(**self.budget)
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SuiteConfig":
        with open(path) as fh:
            d = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))
        fixed = []
        for item in d.get("instances", []):
            p = item if isinstance(item, str) else item.get("path", "")
            full = p if os.path.isabs(p) else os.path.join(base, p)
            fixed.append(full if isinstance(item, str) else {**item, "path": full})
        d["instances"] = fixed
        return cls.from_dict(d)

    def jobs(self):
        """Valid (path, kind, method, backend, seed) combinations in a fixed order."""
        out = []
        for (path, kind), method, backend, seed in itertools.product(
            self.instances, self.methods, self.backends, self.seeds
        ):
            out.append((path, kind, method, backend, seed))
        return out


def bundled_instances(kind=None):
    """Paths of the small instances shipped with the package."""
    root = resources.files("slackfree") / "data"
    paths = []
    for sub, k in (("mdkp", "mdkp"), ("tsp", "tsp"), ("mis", "mis")):
        if kind not in (None, k):
            continue
        d = root / sub
        paths += [(str(p), k) for p in sorted(d.iterdir(), key=lambda p: p.name) if p.is_file()]
    return paths


def bundled_suite(methods=("subgradient",), seeds=(0, 1, 2, 3, 4), kind=None, **kw) -> SuiteConfig:
    return SuiteConfig(instances=tuple(bundled_instances(kind)), methods=tuple(methods), seeds=tuple(seeds), **kw)


def _run_job(job, cfg: SuiteConfig, cache):
    path, kind, method, backend, seed = job
    inst, bk = cache[path]
    try:
        return run_pipeline(
            inst,
            method,
            backend,
            seed,
            cfg.method_overrides,
            PenaltyConfig(**cfg.penalty_overrides),
            SolveBudget(**cfg.budget),
            best_known=bk,
        )
    except Exception as exc:  # recorded per row, siblings keep running
        qs, qf = qubit_count(inst)
        return RunRecord(
            inst.name, inst.kind, method, backend, int(seed), qs, qf, status=f"error: {type(exc).__name__}: {exc}"
        )


def run_suite(cfg: SuiteConfig, write=True):
    cache = {}
    for path, kind in cfg.instances:
        inst = load_instance(path, kind)
        cache[path] = (inst, best_known_for(inst))
    jobs = []
    for job in cfg.jobs():
        inst = cache[job[0]][0]
        if job[2] == "augmented_lagrangian" and inst.kind == "tsp":
            log.info("skipping augmented_lagrangian on TSP instance %s", inst.name)
            continue
        if job[2] == "unbalanced" and inst.kind != "mdkp":
            log.info("skipping unbalanced on %s instance %s", inst.kind, inst.name)
            continue
        jobs.append(job)
    log.info("suite: %d runs", len(jobs))
    if cfg.parallelism == 1:
        records = [_run_job(j, cfg, cache) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            records = list(pool.map(lambda j: _run_job(j, cfg, cache), jobs))
    if write and cfg.output_dir:
        write_artifacts(records, cfg.output_dir, [v[0] for v in cache.values()])
    return records


# -------------------------------------------------------------- artifacts


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA}\n# metric: {GAP_CONVENTION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        d = r.to_dict()
        w.writerow([_cell(d[c]) for c in COLUMNS])
    return buf.getvalue()


def _parse_cell(col, text):
    if text == "":
        return None if col not in ("metric_kind", "status") else ""
    if col in ("seed", "qubits_slack", "qubits_slackfree", "dual_iterations"):
        return int(text)
    if col in ("feasible_raw", "feasible_repaired"):
        return text == "true"
    if col in ("instance", "problem", "method", "backend", "metric_kind", "status"):
        return text
    return float(text)


def read_results_csv(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    return [RunRecord(**{c: _parse_cell(c, row[c]) for c in COLUMNS}) for row in reader]


def qubits_csv(instances) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "n", "slack", "slackfree"])
    for inst in sorted(instances, key=lambda i: i.name):
        w.writerow([inst.name, inst.n, *qubit_count(inst)])
    return buf.getvalue()


def times_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "mean_classical_s", "mean_solver_s"])
    by = {}
    for r in records:
        by.setdefault(r.method, []).append(r)
    for m in sorted(by):
        rs = by[m]
        w.writerow([m, f"{statistics.fmean(r.classical_time_s for r in rs):.6f}", f"{statistics.fmean(r.solver_time_s for r in rs):.6f}"])
    return buf.getvalue()


def summary_rows(records):
    """Per (problem, method, backend): run count, feasibility rate, median metric, Q.L count."""
    by = {}
    for r in records:
        by.setdefault((r.problem, r.method, r.backend), []).append(r)
    rows = []
    for key in sorted(by):
        rs = by[key]
        vals = [r.metric_value for r in rs if r.metric_value is not None]
        rows.append(
            dict(
                problem=key[0],
                method=key[1],
                backend=key[2],
                runs=len(rs),
                feasible_pct=100.0 * sum(r.feasible_repaired for r in rs) / len(rs),
                metric_kind=rs[0].metric_kind or ("rsq_pct" if key[0] == "mis" else "opt_gap_pct"),
                median_metric=statistics.median(vals) if vals else None,
                ql=sum(r.status == "Q.L" for r in rs),
            )
        )
    return rows


def summary_csv(records) -> str:
    rows = summary_rows(records)
    buf = io.StringIO()
    cols = ["problem", "method", "backend", "runs", "feasible_pct", "metric_kind", "median_metric", "ql"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r[c]) for c in cols])
    return buf.getvalue()


def write_artifacts(records, out_dir, instances=None):
    atomic_write(os.path.join(out_dir, "results.csv"), records_to_csv(records))
    atomic_write(
        os.path.join(out_dir, "results.json"),
        json.dumps({"schema": SCHEMA, "metric": GAP_CONVENTION, "records": [r.to_dict() for r in records]}, indent=1, allow_nan=False) + "\n",
    )
    if instances is not None:
        atomic_write(os.path.join(out_dir, "qubits.csv"), qubits_csv(instances))
    atomic_write(os.path.join(out_dir, "times.csv"), times_csv(records))


def median_gap(records, method, missing=100.0):
    """Median post-repair gap; rows with no usable solution count as ``missing``."""
    vals = []
    for r in records:
        if r.method != method:
            continue
        ok = r.status == "ok" and r.feasible_repaired and r.metric_value is not None
        vals.append(r.metric_value if ok else missing)
    return statistics.median(vals) if vals else math.nan
