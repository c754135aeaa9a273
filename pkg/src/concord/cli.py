"""Command-line driver: check, run, bench, and oracle subcommands."""

from __future__ import annotations

import argparse
import fnmatch
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import algebra, bench, dsl, ingest, oracle, partitioned, solver
from .align import eliminate_lluns, run_spec
from .errors import EngineError, ParseError, QueryTypeError, SpecValidationError
from .model import VarCatalog

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_INFEASIBLE = 3

_VALIDATION_ERRORS = (ParseError, QueryTypeError, SpecValidationError)


def _error_block(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def _parse_sets(pairs: Optional[Sequence[str]]) -> dict[str, float]:
    out = {}
    for pair in pairs or ():
        name, _, value = pair.partition("=")
        if not name or not value:
            raise SpecValidationError(f"--set expects name=value, got {pair!r}")
        out[name] = float(value)
    return out


def _load_weights(path: Optional[str], catalog: VarCatalog) -> dict[int, float]:
    """Weight file: one `label-glob weight` per line; later lines win."""
    if path is None:
        return {}
    patterns = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.rsplit(None, 1)
        if len(parts) != 2:
            raise SpecValidationError(f"bad weight line: {raw!r}")
        patterns.append((parts[0], float(parts[1])))
    overrides = {}
    for var in catalog:
        label = var.label or f"x{var.id}"
        for pattern, weight in patterns:
            if fnmatch.fnmatchcase(label, pattern):
                overrides[var.id] = weight
    return overrides


def cmd_check(args) -> int:
    text = Path(args.spec).read_text(encoding="utf-8")
    doc = dsl.parse(text, presets=_parse_sets(args.set))
    validated = dsl.validate(doc)
    for name, sig in validated.view_signatures.items():
        print(f"view {name}: {sig}")
    print(f"ok: {len(validated.schemas)} tables, "
          f"{len(validated.alignment.views)} views")
    return EXIT_OK


def cmd_run(args) -> int:
    text = Path(args.spec).read_text(encoding="utf-8")
    doc = dsl.parse(text, presets=_parse_sets(args.set))
    validated = dsl.validate(doc)
    settings = validated.settings
    feas_tol = args.tolerance_feas if args.tolerance_feas is not None else \
        settings.get("tolerance_feas", solver.DEFAULT_FEAS_TOL)
    conc_tol = args.tolerance_conc if args.tolerance_conc is not None else \
        settings.get("tolerance_conc", solver.DEFAULT_CONC_TOL)

    catalog = VarCatalog()
    instance = ingest.load_directory(args.data, validated.schemas,
                                     validated.policies, catalog)

    backends = ["inline", "partitioned"] if args.backend == "both" \
        else [args.backend]
    outcomes = []
    for backend in backends:
        evaluate = None
        if backend == "partitioned":
            def evaluate(q, inst):
                ptables = {name: partitioned.from_inline(t)
                           for name, t in inst.tables.items()}
                return partitioned.to_inline(
                    partitioned.eval_partitioned(q, ptables))
        derived, constraints = run_spec(validated.alignment, instance,
                                        evaluate=evaluate)
        elim = eliminate_lluns(constraints, catalog)
        overrides = _load_weights(args.weights, catalog)
        problem = solver.assemble(elim.constraints, catalog, overrides,
                                  feas_tol)
        result = solver.solve(problem, feas_tol, conc_tol)
        outcomes.append((backend, problem, result))

    lines = []
    for backend, problem, result in outcomes:
        lines.append(f"backend: {backend}")
        lines.append(f"status: {result.status.value}")
        if result.discord is not None:
            lines.append(f"discord: {format(result.discord, '.17g')}")
            lines.append(f"discord-per-variable: "
                         f"{format(result.discord_per_variable, '.17g')}")
        lines.append(f"variables: {problem.n_vars}  "
                     f"constraints: {problem.n_constraints}")
        if result.valuation is not None:
            ranked = sorted(result.valuation.assignment.items(),
                            key=lambda kv: (-abs(kv[1]), kv[0]))
            if args.top is not None:
                ranked = ranked[:args.top]
            lines.append("adjustments:")
            for vid, value in ranked:
                lines.append(f"  {problem.labels.get(vid, f'x{vid}')} = "
                             f"{format(value, '.17g')}")
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    if args.report:
        Path(args.report).write_text(report, encoding="utf-8")

    if args.export_qp:
        _, problem, _ = outcomes[0]
        Path(args.export_qp).write_text(
            solver.write_qp(problem, feas_tol, conc_tol), encoding="utf-8")

    statuses = {result.status for _, _, result in outcomes}
    if len(statuses) > 1:
        raise EngineError(f"backends disagree: {sorted(s.value for s in statuses)}")
    if args.fail_on_infeasible and solver.Status.INFEASIBLE in statuses:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_bench(args) -> int:
    queries = tuple(args.queries.split(",")) if args.queries else bench.QUERY_NAMES
    cfg = bench.BenchConfig(n=args.n, null_prob=args.null_prob,
                            noise_sigma=args.noise_sigma, seed=args.seed,
                            queries=queries, repetitions=args.repetitions)
    backends = ["inline", "partitioned"] if args.backend == "both" \
        else [args.backend]
    rows = bench.run_bench(cfg, backends)
    csv_text = bench.report_csv(rows, timing=not args.no_timing)
    if args.report:
        Path(args.report).write_text(csv_text, encoding="utf-8")
    sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_oracle(args) -> int:
    problem, meta = solver.read_qp(Path(args.export).read_text(encoding="utf-8"))
    feas_tol = meta.get("tolerance_feas", solver.DEFAULT_FEAS_TOL)
    conc_tol = meta.get("tolerance_conc", solver.DEFAULT_CONC_TOL)
    if problem.ground_contradiction:
        print("status: infeasible")
        print("reason: contradictory ground equations")
        return EXIT_OK
    result = oracle.oracle_solve(problem.var_ids, problem.weights,
                                 problem.rows, problem.rhs, feas_tol, conc_tol)
    print(f"status: {result.status}")
    if result.discord is not None:
        print(f"discord: {format(result.discord, '.17g')}")
    print(f"feasibility-residual: {format(result.feasibility_residual, '.17g')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="concord",
        description="Symbolic alignment of uncertain tabular sources and "
                    "measurement of their disagreement.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tolerance-feas", type=float, default=None,
                        help="feasibility tolerance (default 1e-6)")
    common.add_argument("--tolerance-conc", type=float, default=None,
                        help="concordance tolerance on discord (default 1e-9)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--backend", choices=("inline", "partitioned", "both"),
                        default="inline")
    common.add_argument("--weights", default=None,
                        help="file of label-glob / weight overrides")
    common.add_argument("--set", action="append", metavar="NAME=VALUE",
                        help="override a spec setting")

    p_check = sub.add_parser("check", parents=[common],
                             help="parse and typecheck a spec document")
    p_check.add_argument("spec")
    p_check.set_defaults(func=cmd_check)

    p_run = sub.add_parser("run", parents=[common],
                           help="ingest data, align, and measure discord")
    p_run.add_argument("spec")
    p_run.add_argument("--data", required=True, help="directory of CSV files")
    p_run.add_argument("--export-qp", default=None)
    p_run.add_argument("--report", default=None)
    p_run.add_argument("--top", type=int, default=None,
                       help="print only the N largest adjustments")
    p_run.add_argument("--fail-on-infeasible", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", parents=[common],
                             help="run the synthetic microbenchmark")
    p_bench.add_argument("--n", type=int, required=True)
    p_bench.add_argument("--queries", default=None,
                         help="comma-separated subset of " + ",".join(bench.QUERY_NAMES))
    p_bench.add_argument("--null-prob", type=float, default=0.01)
    p_bench.add_argument("--noise-sigma", type=float, default=0.05)
    p_bench.add_argument("--repetitions", type=int, default=3)
    p_bench.add_argument("--report", default=None)
    p_bench.add_argument("--no-timing", action="store_true",
                         help="zero the timing columns (reproducible output)")
    p_bench.set_defaults(func=cmd_bench)

    p_oracle = sub.add_parser("oracle", parents=[common],
                              help="dense reference solve of an exported problem")
    p_oracle.add_argument("export")
    p_oracle.set_defaults(func=cmd_oracle)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        sys.stderr.write(_error_block(exc) + "\n")
        return EXIT_VALIDATION
    except (EngineError, OSError) as exc:
        sys.stderr.write(_error_block(exc) + "\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
