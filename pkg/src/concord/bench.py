"""Synthetic microbenchmark: data generator, query set, timing harness.

The schema is two tables ``R : A,B |> C,D`` and ``S : B |> E,F``.  The
generator creates n rows for S and, per S row, between 0 and sqrt(n) rows of
R sharing its B key, so the database holds about ``n + (n/2)*sqrt(n)`` rows.
Distorted symbolic views are derived from the ground tables by nulling each
value cell with a small probability and otherwise applying a relative
gaussian distortion, then encoding cells the usual way (``v*(1+x)``, bare
variable for nulls).

Each benchmark run evaluates a query over the symbolic views, aligns the
result with the same query over the ground tables, and solves the resulting
system under unit weights for error variables and zero weights for nulls.
Reported times use a monotonic clock; evaluation is repeated (first run
discarded) and the median is reported, while equation generation and solving
are timed once since they allocate fresh variables.
"""

from __future__ import annotations

import math
import random
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import algebra, partitioned
from .algebra import (Aggregate, Attr, BinOp, Const, Derive, DiscUnion, Join,
                      Query, RelRef)
from .align import coalesce, eliminate_lluns, fuse
from .errors import EngineError
from .model import Instance, LinExpr, STable, Signature, VarCatalog, VarKind
from .solver import QpProblem, SolveResult, assemble, solve

QUERY_NAMES = ("q1", "q2", "q3", "q4", "q5", "q6", "q7",
               "T1", "T2", "T3", "T4", "T5")

GROUND_R, GROUND_S = "R", "S"
SYM_R, SYM_S, SYM_R2 = "R1", "S1", "R2"


@dataclass
class BenchConfig:
    n: int
    null_prob: float = 0.01
    noise_sigma: float = 0.05
    seed: int = 0
    queries: tuple[str, ...] = QUERY_NAMES
    repetitions: int = 3

    def __post_init__(self):
        if self.n < 1:
            raise EngineError("instance size must be at least 1")
        if not 0.0 <= self.null_prob <= 1.0:
            raise EngineError("null probability must be within [0, 1]")
        unknown = set(self.queries) - set(QUERY_NAMES)
        if unknown:
            raise EngineError(f"unknown queries: {sorted(unknown)}")


@dataclass
class BenchInstance:
    instance: Instance  # R, S ground plus R1, S1, R2 symbolic views
    total_ground_rows: int


def gen_bench_instance(cfg: BenchConfig) -> BenchInstance:
    """Generate the ground tables and their distorted symbolic views."""
    rng = random.Random(cfg.seed)
    s_sig = Signature(("B",), ("E", "F"))
    r_sig = Signature(("A", "B"), ("C", "D"))

    s_rows = {}
    for b in range(cfg.n):
        s_rows[(b,)] = (LinExpr.of_const(round(rng.uniform(1.0, 100.0), 3)),
                        LinExpr.of_const(round(rng.uniform(1.0, 100.0), 3)))
    fan = math.isqrt(cfg.n)
    r_rows = {}
    for b in range(cfg.n):
        for a in range(rng.randint(0, fan)):
            r_rows[(a, b)] = (
                LinExpr.of_const(round(rng.uniform(1.0, 100.0), 3)),
                LinExpr.of_const(round(rng.uniform(1.0, 100.0), 3)))

    catalog = VarCatalog()
    ground_r = STable(r_sig, r_rows)
    ground_s = STable(s_sig, s_rows)
    tables = {
        GROUND_R: ground_r,
        GROUND_S: ground_s,
        SYM_R: _distorted_view(ground_r, cfg, rng, catalog, SYM_R),
        SYM_S: _distorted_view(ground_s, cfg, rng, catalog, SYM_S),
        SYM_R2: _distorted_view(ground_r, cfg, rng, catalog, SYM_R2),
    }
    total = len(r_rows) + len(s_rows)
    return BenchInstance(Instance(tables, catalog), total)


def _distorted_view(table: STable, cfg: BenchConfig, rng: random.Random,
                    catalog: VarCatalog, name: str) -> STable:
    rows = {}
    for key, values in table:
        key_txt = ",".join(str(v) for v in key)
        cells = []
        for attr, cell in zip(table.sig.value_attrs, values):
            label = f"{name}({key_txt}).{attr}"
            if rng.random() < cfg.null_prob:
                cells.append(LinExpr.of_var(catalog.fresh(VarKind.NULL, label)))
                continue
            v = cell.const * (1.0 + rng.gauss(0.0, cfg.noise_sigma))
            x = catalog.fresh(VarKind.ERROR, label)
            cells.append(LinExpr.of_var(x) if v == 0.0 else LinExpr(v, {x: v}))
        rows[key] = tuple(cells)
    return STable(table.sig, rows)


# ---------------------------------------------------------------------------
# Query set

def _form(name: str, r: str, s: str) -> Query:
    if name == "q1":
        return Join(RelRef(r), RelRef(s))
    if name == "q2":
        return Derive(RelRef(r), "W", BinOp("+", Attr("C"), Attr("D")))
    if name == "q3":
        return Derive(Derive(RelRef(r), "W", Const(1.0)), "X",
                      BinOp("*", Attr("W"), Attr("C")))
    if name == "q4":
        return Aggregate(RelRef(r), ("A",), ("C",))
    if name == "q5":
        return Aggregate(RelRef(r), ("B",), ("C",))
    raise EngineError(f"no base form for {name}")


def bench_query(name: str) -> tuple[Query, Optional[Query]]:
    """The evaluated query and, for plain q-queries, its ground twin.

    q6 unions the two distorted views of R; its ground twin unions R with
    itself.  q7 and the T queries embed the alignment in the query itself
    (a discriminated union coalesced by the harness), so they have no
    separate twin.
    """
    if name in ("q1", "q2", "q3", "q4", "q5"):
        return (_form(name, SYM_R, SYM_S), _form(name, GROUND_R, GROUND_S))
    if name == "q6":
        return (DiscUnion(RelRef(SYM_R), RelRef(SYM_R2), "Z"),
                DiscUnion(RelRef(GROUND_R), RelRef(GROUND_R), "Z"))
    if name == "q7":
        return (DiscUnion(RelRef(SYM_R), RelRef(SYM_R2), "Z"), None)
    if name in ("T1", "T2", "T3", "T4", "T5"):
        base = "q" + name[1]
        return (DiscUnion(_form(base, SYM_R, SYM_S),
                          _form(base, GROUND_R, GROUND_S), "Z"), None)
    raise EngineError(f"unknown query {name!r}")


@dataclass
class BenchRow:
    query: str
    n: int
    seed: int
    backend: str
    eval_ms: float
    eqgen_ms: float
    solve_ms: float
    n_vars: int
    n_constraints: int
    discord: Optional[float]
    status: str


REPORT_COLUMNS = ("query", "n", "seed", "backend", "eval_ms", "eqgen_ms",
                  "solve_ms", "n_vars", "n_constraints", "discord", "status")


def _evaluator(backend: str, instance: Instance) -> Callable[[Query], STable]:
    if backend == "inline":
        return lambda q: algebra.eval_symbolic(q, instance)
    if backend == "partitioned":
        ptables = {name: partitioned.from_inline(t)
                   for name, t in instance.tables.items()}
        return lambda q: partitioned.to_inline(
            partitioned.eval_partitioned(q, ptables))
    raise EngineError(f"unknown backend {backend!r}")


def run_query(name: str, bi: BenchInstance, cfg: BenchConfig,
              backend: str = "inline") -> tuple[BenchRow, SolveResult, QpProblem]:
    """Evaluate, align with the ground run, and solve one benchmark query."""
    instance = bi.instance
    catalog = instance.catalog
    evaluate = _evaluator(backend, instance)
    sym_q, ground_q = bench_query(name)

    times = []
    result = None
    for _ in range(max(1, cfg.repetitions) + 1):
        t0 = time.perf_counter()
        result = evaluate(sym_q)
        times.append((time.perf_counter() - t0) * 1e3)
    eval_ms = statistics.median(times[1:]) if len(times) > 1 else times[0]

    t0 = time.perf_counter()
    if name == "q7":
        fused = coalesce(["Z"], result, catalog, origin=name)
        ground_union = algebra.eval_symbolic(
            DiscUnion(RelRef(GROUND_R), RelRef(GROUND_R), "Z"), instance)
        ground_tbl = coalesce(["Z"], ground_union, catalog, origin=name).table
        aligned = fuse([fused.table, ground_tbl], catalog, origin=name)
        constraints = fused.constraints + aligned.constraints
    elif name.startswith("T"):
        fused = coalesce(["Z"], result, catalog, origin=name)
        constraints = fused.constraints
    else:
        ground_tbl = algebra.eval_symbolic(ground_q, instance)
        aligned = fuse([result, ground_tbl], catalog, origin=name)
        constraints = aligned.constraints
    elim = eliminate_lluns(constraints, catalog)
    problem = assemble(elim.constraints, catalog)
    eqgen_ms = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    solved = solve(problem)
    solve_ms = (time.perf_counter() - t0) * 1e3

    row = BenchRow(name, cfg.n, cfg.seed, backend, eval_ms, eqgen_ms, solve_ms,
                   problem.n_vars, problem.n_constraints, solved.discord,
                   solved.status.value)
    return row, solved, problem


def run_bench(cfg: BenchConfig, backends: Sequence[str] = ("inline",),
              ) -> list[BenchRow]:
    """Run every configured query on every backend over one generated instance."""
    rows = []
    for backend in backends:
        bi = gen_bench_instance(cfg)
        for name in cfg.queries:
            row, _, _ = run_query(name, bi, cfg, backend)
            rows.append(row)
    return rows


def report_csv(rows: Sequence[BenchRow], timing: bool = True) -> str:
    """Fixed-column CSV; pass timing=False for byte-reproducible output."""
    out = [",".join(REPORT_COLUMNS)]
    for r in rows:
        discord = "" if r.discord is None else format(r.discord, ".17g")
        cells = [r.query, str(r.n), str(r.seed), r.backend,
                 f"{r.eval_ms:.3f}" if timing else "0",
                 f"{r.eqgen_ms:.3f}" if timing else "0",
                 f"{r.solve_ms:.3f}" if timing else "0",
                 str(r.n_vars), str(r.n_constraints), discord, r.status]
        out.append(",".join(cells))
    return "\n".join(out) + "\n"
