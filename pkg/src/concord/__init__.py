"""Symbolic evaluation of multidimensional queries over uncertain sources,
alignment of overlapping tables into linear concordance constraints, and
measurement of inter-source discord via weighted constrained least squares.
"""

from .model import (Instance, KeyValue, LinExpr, STable, Signature, Valuation,
                    VarCatalog, VarKind, Variable, Week)
from .algebra import (Aggregate, Attr, BinOp, CmpAttrs, CmpLit, Cond, Const,
                      Derive, Diff, DiscUnion, Join, KeyShift, NotCond,
                      AndCond, ProjectAway, Query, RelRef, Rename, Select,
                      TrueCond, VExpr, apply_valuation,
                      apply_valuation_instance, eval_ground, eval_symbolic,
                      typecheck)
from .partitioned import (PartitionedTable, eval_partitioned, from_inline,
                          to_inline)
from .align import (AlignmentSpec, Constraint, ConstrainedSTable, Elimination,
                    ViewDef, coalesce, constraint_lines, eliminate_lluns,
                    fuse, run_spec)
from .solver import (QpProblem, SolveResult, Status, assemble,
                     check_concordance, extract_concordant_instance,
                     objective_at, read_qp, residual_at, solve, write_qp)
from .oracle import OracleResult, oracle_solve
from .ingest import (EncodingPolicy, KeyType, TableSchema, load_csv,
                     load_directory)
from .bench import BenchConfig, gen_bench_instance, run_bench

__version__ = "0.1.0"
