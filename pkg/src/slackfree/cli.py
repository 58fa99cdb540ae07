"""Command line entry point: ``python -m slackfree <command>``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import bench
from .instances import (
    generate_mdkp,
    generate_mis,
    generate_tsp,
    load_instance,
    write_dimacs,
    write_mdkp,
    write_tsplib,
)
from .qubo import qubit_count, qubit_count_for

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _parser():
    p = _Parser(prog="slackfree", description="Slack-free Lagrangian QUBO pipelines.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="synthesize a seeded instance")
    g.add_argument("problem", choices=["tsp", "mdkp", "mis"])
    g.add_argument("--cities", type=int, help="TSP city count")
    g.add_argument("--n", type=int, help="MDKP items or MIS vertices")
    g.add_argument("--m", type=int, default=1, help="MDKP constraint count")
    g.add_argument("--edge-prob", type=float, default=0.3)
    g.add_argument("--coord-range", type=int, default=1000)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--name")
    g.add_argument("--out", required=True)

    q = sub.add_parser("qubits", help="print slack and slack-free variable counts")
    q.add_argument("--problem", choices=["tsp", "mdkp", "mis"])
    q.add_argument("--n", type=int)
    q.add_argument("--capacities", help="comma-separated MDKP capacities")
    q.add_argument("--file", help="read the instance instead")

    s = sub.add_parser("solve", help="run one pipeline")
    s.add_argument("--problem", choices=["tsp", "mdkp", "mis"])
    s.add_argument("--file", required=True)
    s.add_argument("--method", default="subgradient", choices=bench.PIPELINE_METHODS)
    s.add_argument("--backend", default="exact")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iters", type=int)

    b = sub.add_parser("bench", help="run a suite")
    src = b.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON suite config")
    src.add_argument("--bundled", action="store_true", help="use the shipped instances")
    b.add_argument("--methods", help="comma-separated, with --bundled")
    b.add_argument("--seeds", type=int, default=5, help="seed count, with --bundled")
    b.add_argument("--out", help="output directory (overrides the config)")
    b.add_argument("--parallelism", type=int)

    r = sub.add_parser("report", help="summarize a results.csv")
    r.add_argument("--results", required=True)
    r.add_argument("--out", help="directory for summary.csv and times.csv")
    return p


def _cmd_gen(a):
    if a.problem == "tsp":
        if a.cities is None:
            raise UsageError("gen tsp needs --cities")
        inst = generate_tsp(a.cities, a.seed, coord_range=a.coord_range, name=a.name)
        text = write_tsplib(inst)
    elif a.problem == "mdkp":
        if a.n is None:
            raise UsageError("gen mdkp needs --n")
        inst = generate_mdkp(a.n, a.m, a.seed)
        text = write_mdkp(inst)
    else:
        if a.n is None:
            raise UsageError("gen mis needs --n")
        inst = generate_mis(a.n, a.edge_prob, a.seed)
        text = write_dimacs(inst)
    bench.atomic_write(a.out, text)
    return EXIT_OK


def _cmd_qubits(a):
    if a.file:
        counts = qubit_count(load_instance(a.file, a.problem))
    else:
        if a.problem is None or a.n is None:
            raise UsageError("qubits needs --file or --problem with --n")
        caps = None
        if a.problem == "mdkp":
            if not a.capacities:
                raise UsageError("mdkp qubit counts need --capacities")
            try:
                caps = [int(c) for c in a.capacities.split(",")]
            except ValueError:
                raise UsageError("--capacities must be comma-separated integers") from None
        counts = qubit_count_for(a.problem, a.n, caps)
    print(f"{counts[0]} {counts[1]}")
    return EXIT_OK


def _cmd_solve(a):
    inst = load_instance(a.file, a.problem)
    overrides = {} if a.max_iters is None else {"max_iters": a.max_iters}
    rec = bench.run_pipeline(inst, a.method, a.backend, a.seed, overrides)
    print(json.dumps(rec.to_dict(), indent=1))
    return EXIT_OK if rec.status in ("ok", "Q.L") else EXIT_RUNTIME


def _cmd_bench(a):
    if a.config:
        cfg = bench.SuiteConfig.load(a.config)
    else:
        methods = tuple(a.methods.split(",")) if a.methods else ("subgradient", "slack_qubo")
        cfg = bench.bundled_suite(methods=methods, seeds=tuple(range(a.seeds)))
    changes = {}
    if a.out:
        changes["output_dir"] = a.out
    if a.parallelism:
        changes["parallelism"] = a.parallelism
    if changes:
        cfg = bench.dataclasses.replace(cfg, **changes)
    if not cfg.output_dir:
        raise UsageError("bench needs an output directory (--out or output_dir)")
    records = bench.run_suite(cfg)
    print(bench.summary_csv(records), end="")
    failed = [r for r in records if r.status.startswith("error")]
    for r in failed:
        print(f"{r.instance} {r.method} seed={r.seed}: {r.status}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_report(a):
    records = bench.read_results_csv(a.results)
    text = bench.summary_csv(records)
    print(text, end="")
    if a.out:
        bench.atomic_write(os.path.join(a.out, "summary.csv"), text)
        bench.atomic_write(os.path.join(a.out, "times.csv"), bench.times_csv(records))
    return EXIT_OK


def cli(argv=None) -> int:
    try:
        a = _parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"gen": _cmd_gen, "qubits": _cmd_qubits, "solve": _cmd_solve, "bench": _cmd_bench, "report": _cmd_report}
    try:
        return handler[a.command](a)
    except UsageError as exc:
        print(f"slackfree {a.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"slackfree {a.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(cli())
