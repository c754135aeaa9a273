"""Normalized table backend: one ground constants table plus one coefficient
table per value attribute.

A table ``K |> V`` with value attributes ``B1..Bn`` becomes ``n + 1`` flat
relations: a ground base table holding the constant term of every cell, and
per attribute a table ``K, var |> coeff`` holding the nonzero coefficients.
Query operators translate componentwise; additions become grouped coefficient
sums and scalar multiples become in-place coefficient updates, both
zero-filtering so that no stored coefficient is ever zero.

This backend exists to cross-validate the inline evaluator: both must agree
exactly (same keys, same canonical expressions) on every query.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping

from .errors import DivisorError, KeyVariantError, NonlinearError
from .model import LinExpr, STable, Signature, key_shift, row_sort_token
from . import algebra
from .algebra import (Aggregate, Attr, BinOp, Const, Derive, Diff, DiscUnion,
                      Join, KeyShift, ProjectAway, Query, RelRef, Rename,
                      Select, VExpr, _cond_eval)

# coefficient table: key tuple -> {var id -> nonzero coeff}; keys with no
# coefficients are absent entirely
CoeffTable = dict[tuple, dict[int, float]]


def _normalized(ct: CoeffTable) -> CoeffTable:
    return {k: dict(vs) for k, vs in ct.items() if vs}


@dataclass
class PartitionedTable:
    base: STable
    coeffs: dict[str, CoeffTable]

    def __post_init__(self):
        assert set(self.coeffs) == set(self.base.sig.value_attrs)
        self.coeffs = {a: _normalized(t) for a, t in self.coeffs.items()}

    @property
    def sig(self) -> Signature:
        return self.base.sig

    def __eq__(self, other):
        if not isinstance(other, PartitionedTable):
            return NotImplemented
        return self.base == other.base and self.coeffs == other.coeffs

    def zero_rows(self) -> list[tuple]:
        """Coefficient rows with a zero coefficient; empty when zero-filtered."""
        out = []
        for attr, table in self.coeffs.items():
            for key, vs in table.items():
                for var, c in vs.items():
                    if c == 0.0:
                        out.append((attr, key, var))
        return out


def from_inline(table: STable) -> PartitionedTable:
    base_rows = {}
    coeffs: dict[str, CoeffTable] = {a: {} for a in table.sig.value_attrs}
    for key, values in table:
        base_rows[key] = tuple(LinExpr.of_const(e.const) for e in values)
        for attr, e in zip(table.sig.value_attrs, values):
            if e.terms:
                coeffs[attr][key] = dict(e.terms)
    return PartitionedTable(STable(table.sig, base_rows), coeffs)


def to_inline(pt: PartitionedTable) -> STable:
    rows = {}
    for key, values in pt.base:
        cells = []
        for attr, e in zip(pt.sig.value_attrs, values):
            cells.append(LinExpr(e.const, pt.coeffs[attr].get(key)))
        rows[key] = tuple(cells)
    return STable(pt.sig, rows)


def eval_partitioned(q: Query, tables: Mapping[str, PartitionedTable]) -> PartitionedTable:
    """Evaluate ``q`` over partitioned tables using the componentwise rules."""
    algebra.typecheck(q, {name: pt.sig for name, pt in tables.items()})
    return _eval(q, tables)


def _sorted_keys(ct: CoeffTable) -> list[tuple]:
    return sorted(ct, key=row_sort_token)


def _eval(q: Query, tables: Mapping[str, PartitionedTable]) -> PartitionedTable:
    if isinstance(q, RelRef):
        return tables[q.name]

    if isinstance(q, Select):
        t = _eval(q.source, tables)
        keep = {k for k, _ in t.base if _cond_eval(q.cond, t.sig, k)}
        base = STable(t.sig, {k: v for k, v in t.base if k in keep})
        coeffs = {a: {k: vs for k, vs in ct.items() if k in keep}
                  for a, ct in t.coeffs.items()}
        return PartitionedTable(base, coeffs)

    if isinstance(q, ProjectAway):
        t = _eval(q.source, tables)
        drop = set(q.drop)
        keep_idx = [i for i, a in enumerate(t.sig.value_attrs) if a not in drop]
        sig = Signature(t.sig.key_attrs,
                        tuple(t.sig.value_attrs[i] for i in keep_idx))
        base = STable(sig, {k: tuple(v[i] for i in keep_idx) for k, v in t.base})
        coeffs = {a: ct for a, ct in t.coeffs.items() if a not in drop}
        return PartitionedTable(base, coeffs)

    if isinstance(q, Rename):
        t = _eval(q.source, tables)
        ren = lambda a: q.new if a == q.old else a
        sig = Signature(tuple(ren(a) for a in t.sig.key_attrs),
                        tuple(ren(a) for a in t.sig.value_attrs))
        base = STable(sig, t.base.rows)
        coeffs = {ren(a): ct for a, ct in t.coeffs.items()}
        return PartitionedTable(base, coeffs)

    if isinstance(q, DiscUnion):
        lt = _eval(q.left, tables)
        rt = _eval(q.right, tables)
        sig = Signature(lt.sig.key_attrs + (q.tag,), lt.sig.value_attrs)
        base_rows = {}
        for k, v in lt.base:
            base_rows[k + (0,)] = v
        for k, v in rt.base:
            base_rows[k + (1,)] = v
        coeffs: dict[str, CoeffTable] = {}
        for attr in sig.value_attrs:
            ct: CoeffTable = {}
            for k, vs in lt.coeffs[attr].items():
                ct[k + (0,)] = vs
            for k, vs in rt.coeffs[attr].items():
                ct[k + (1,)] = vs
            coeffs[attr] = ct
        return PartitionedTable(STable(sig, base_rows), coeffs)

    if isinstance(q, Diff):
        lt = _eval(q.left, tables)
        rt = _eval(q.right, tables)
        gone = set(rt.base.rows)
        base = STable(lt.sig, {k: v for k, v in lt.base if k not in gone})
        coeffs = {a: {k: vs for k, vs in ct.items() if k not in gone}
                  for a, ct in lt.coeffs.items()}
        return PartitionedTable(base, coeffs)

    if isinstance(q, Join):
        lt = _eval(q.left, tables)
        rt = _eval(q.right, tables)
        shared = [a for a in lt.sig.key_attrs if a in rt.sig.key_attrs]
        l_pos = [lt.sig.key_index(a) for a in shared]
        r_pos = [rt.sig.key_index(a) for a in shared]
        r_extra = [i for i, a in enumerate(rt.sig.key_attrs) if a not in shared]
        sig = Signature(
            lt.sig.key_attrs + tuple(rt.sig.key_attrs[i] for i in r_extra),
            lt.sig.value_attrs + rt.sig.value_attrs)
        index: dict[tuple, list] = {}
        for rk, rv in rt.base:
            index.setdefault(tuple(rk[i] for i in r_pos), []).append((rk, rv))
        base_rows = {}
        # joined key -> source keys, to semijoin the coefficient tables
        l_of: dict[tuple, tuple] = {}
        r_of: dict[tuple, tuple] = {}
        for lk, lv in lt.base:
            probe = tuple(lk[i] for i in l_pos)
            for rk, rv in index.get(probe, ()):
                key = lk + tuple(rk[i] for i in r_extra)
                base_rows[key] = lv + rv
                l_of[key] = lk
                r_of[key] = rk
        coeffs = {}
        for attr in lt.sig.value_attrs:
            src = lt.coeffs[attr]
            coeffs[attr] = {k: src[lk] for k, lk in l_of.items() if lk in src}
        for attr in rt.sig.value_attrs:
            src = rt.coeffs[attr]
            coeffs[attr] = {k: src[rk] for k, rk in r_of.items() if rk in src}
        return PartitionedTable(STable(sig, base_rows), coeffs)

    if isinstance(q, Derive):
        t = _eval(q.source, tables)
        sig = Signature(t.sig.key_attrs, t.sig.value_attrs + (q.attr,))
        const_col, coeff_col = _vexpr_eval(q.expr, t)
        base = STable(sig, {k: v + (LinExpr.of_const(const_col[k]),)
                            for k, v in t.base})
        coeffs = dict(t.coeffs)
        coeffs[q.attr] = coeff_col
        return PartitionedTable(base, coeffs)

    if isinstance(q, Aggregate):
        t = _eval(q.source, tables)
        g_pos = [t.sig.key_index(a) for a in q.group]
        v_pos = [t.sig.value_index(a) for a in q.values]
        sig = Signature(q.group, q.values)
        # base: plain grouped sums, iterating rows in their sorted order
        acc: dict[tuple, list[float]] = {}
        for k, v in t.base:
            gk = tuple(k[i] for i in g_pos)
            cur = acc.get(gk)
            if cur is None:
                acc[gk] = [v[i].const for i in v_pos]
            else:
                for j, i in enumerate(v_pos):
                    cur[j] += v[i].const
        base = STable(sig, {k: tuple(LinExpr.of_const(x) for x in v)
                            for k, v in acc.items()})
        # coefficients: zero-filtering aggregation grouped on (group key, var)
        coeffs: dict[str, CoeffTable] = {}
        for attr in q.values:
            src = t.coeffs[attr]
            sums: dict[tuple, dict[int, float]] = {}
            for k in _sorted_keys(src):
                gk = tuple(k[i] for i in g_pos)
                bucket = sums.setdefault(gk, {})
                for var, c in src[k].items():
                    bucket[var] = bucket.get(var, 0.0) + c
            coeffs[attr] = {gk: {v: c for v, c in vs.items() if c != 0.0}
                            for gk, vs in sums.items()}
        return PartitionedTable(base, coeffs)

    if isinstance(q, KeyShift):
        t = _eval(q.source, tables)
        pos = t.sig.key_index(q.attr)

        def shift(k: tuple) -> tuple:
            nk = list(k)
            nk[pos] = key_shift(k[pos], q.delta)
            return tuple(nk)

        base = STable(t.sig, {shift(k): v for k, v in t.base})
        coeffs = {a: {shift(k): vs for k, vs in ct.items()}
                  for a, ct in t.coeffs.items()}
        return PartitionedTable(base, coeffs)

    raise TypeError(f"not a query: {q!r}")


def _vexpr_eval(e: VExpr, t: PartitionedTable) -> tuple[dict, CoeffTable]:
    """Evaluate a derivation over the partitioned form.

    Returns a constants column and a coefficient table over the keys of
    ``t``.  Each step is one of the primitive shapes: a constant column, a
    componentwise sum/difference, or a multiplication/division by a column
    that is variable-free row by row.
    """
    keys = [k for k, _ in t.base]

    if isinstance(e, Const):
        return {k: float(e.value) for k in keys}, {}

    if isinstance(e, Attr):
        if e.name in t.sig.value_attrs:
            idx = t.sig.value_index(e.name)
            const_col = {k: v[idx].const for k, v in t.base}
            return const_col, {k: dict(vs) for k, vs in t.coeffs[e.name].items()}
        pos = t.sig.key_index(e.name)
        col = {}
        for k in keys:
            kv = k[pos]
            if isinstance(kv, bool) or not isinstance(kv, (int, float)):
                raise KeyVariantError(
                    f"key attribute {e.name!r} holds non-numeric value {kv!r}")
            col[k] = float(kv)
        return col, {}

    if isinstance(e, BinOp):
        ac, at = _vexpr_eval(e.left, t)
        bc, bt = _vexpr_eval(e.right, t)
        if e.op in ("+", "-"):
            adding = e.op == "+"
            const_col = {k: ac[k] + bc[k] if adding else ac[k] - bc[k]
                         for k in keys}
            out: CoeffTable = {}
            for k in keys:
                merged = dict(at.get(k, ()))
                for var, c in bt.get(k, {}).items():
                    s = merged.get(var, 0.0) + c if adding else \
                        merged.get(var, 0.0) - c
                    if s == 0.0:
                        merged.pop(var, None)
                    else:
                        merged[var] = s
                if merged:
                    out[k] = merged
            return const_col, out
        if e.op == "*":
            const_col = {}
            out = {}
            for k in keys:
                a_vars = at.get(k)
                b_vars = bt.get(k)
                if not b_vars:
                    alpha, col_c, col_t = bc[k], ac[k], a_vars
                elif not a_vars:
                    alpha, col_c, col_t = ac[k], bc[k], b_vars
                else:
                    raise NonlinearError(
                        "product of two variable-bearing expressions")
                const_col[k] = alpha * col_c
                if col_t:
                    scaled = {v: alpha * c for v, c in col_t.items()}
                    scaled = {v: c for v, c in scaled.items() if c != 0.0}
                    if scaled:
                        out[k] = scaled
            return const_col, out
        if e.op == "/":
            const_col = {}
            out = {}
            for k in keys:
                if bt.get(k):
                    raise DivisorError("division by an expression with variables")
                d = bc[k]
                if d == 0.0:
                    raise DivisorError("division by zero")
                const_col[k] = ac[k] / d
                scaled = {v: c / d for v, c in at.get(k, {}).items()}
                scaled = {v: c for v, c in scaled.items() if c != 0.0}
                if scaled:
                    out[k] = scaled
            return const_col, out
        raise TypeError(f"unknown operator {e.op!r}")

    raise TypeError(f"not a value expression: {e!r}")


def dump_csv(pt: PartitionedTable, directory, name: str) -> list[str]:
    """Write the base table plus one coefficient CSV per value attribute.

    Returns the written file paths.  Base columns are the key attributes then
    the value attributes; coefficient columns are the key attributes then
    ``var`` and ``coeff``.
    """
    from pathlib import Path
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    base_path = directory / f"{name}_base.csv"
    with open(base_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(pt.sig.key_attrs) + list(pt.sig.value_attrs))
        for k, v in pt.base:
            w.writerow([_cell(x) for x in k] + [repr(e.const) for e in v])
    written.append(str(base_path))

    for attr in pt.sig.value_attrs:
        path = directory / f"{name}_{attr}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(pt.sig.key_attrs) + ["var", "coeff"])
            ct = pt.coeffs[attr]
            for k in _sorted_keys(ct):
                for var in sorted(ct[k]):
                    w.writerow([_cell(x) for x in k] + [var, repr(ct[k][var])])
        written.append(str(path))
    return written


def _cell(v) -> str:
    return str(v)
