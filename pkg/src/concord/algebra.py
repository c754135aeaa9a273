"""Query algebra over finite maps: well-formedness checking and evaluation.

The algebra preserves two properties by typing alone: every result satisfies
its key-to-value functional dependency, and every result cell stays a linear
expression.  Selection and joins touch keys only, projection-away drops value
fields only, unions are discriminated by a fresh key field, grouping is on
keys and aggregation (sum) on values.

Two evaluators are exposed: :func:`eval_symbolic` is the reference evaluator
over tables of linear expressions, and :func:`eval_ground` is a separate
plain-float evaluator accepting only ground input, used to cross-check that
symbolic evaluation commutes with substituting a valuation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Union

from .errors import (DivisorError, GroundnessError, KeyVariantError,
                     NonlinearError, QueryTypeError)
from .model import (Instance, KeyValue, LinExpr, STable, Signature, Valuation,
                    key_eq, key_lt, key_shift)


# ---------------------------------------------------------------------------
# Selection conditions (key fields only)

class Cond:
    __slots__ = ()


@dataclass(frozen=True)
class TrueCond(Cond):
    pass


@dataclass(frozen=True)
class CmpAttrs(Cond):
    """attr <op> attr with op in {'=', '<'}."""
    op: str
    left: str
    right: str


@dataclass(frozen=True)
class CmpLit(Cond):
    """attr <op> literal with op in {'=', '<', '>'}; constants on the right."""
    op: str
    attr: str
    literal: KeyValue


@dataclass(frozen=True)
class NotCond(Cond):
    inner: Cond


@dataclass(frozen=True)
class AndCond(Cond):
    left: Cond
    right: Cond


def cond_attrs(c: Cond) -> set[str]:
    if isinstance(c, TrueCond):
        return set()
    if isinstance(c, CmpAttrs):
        return {c.left, c.right}
    if isinstance(c, CmpLit):
        return {c.attr}
    if isinstance(c, NotCond):
        return cond_attrs(c.inner)
    if isinstance(c, AndCond):
        return cond_attrs(c.left) | cond_attrs(c.right)
    raise TypeError(f"not a condition: {c!r}")


def _cond_eval(c: Cond, sig: Signature, key: tuple) -> bool:
    if isinstance(c, TrueCond):
        return True
    if isinstance(c, CmpAttrs):
        a = key[sig.key_index(c.left)]
        b = key[sig.key_index(c.right)]
        return key_eq(a, b) if c.op == "=" else key_lt(a, b)
    if isinstance(c, CmpLit):
        a = key[sig.key_index(c.attr)]
        if c.op == "=":
            return key_eq(a, c.literal)
        if c.op == "<":
            return key_lt(a, c.literal)
        return key_lt(c.literal, a)
    if isinstance(c, NotCond):
        return not _cond_eval(c.inner, sig, key)
    if isinstance(c, AndCond):
        return _cond_eval(c.left, sig, key) and _cond_eval(c.right, sig, key)
    raise TypeError(f"not a condition: {c!r}")


# ---------------------------------------------------------------------------
# Derivation expressions (linear over value fields; keys act as constants)

class VExpr:
    __slots__ = ()


@dataclass(frozen=True)
class Const(VExpr):
    value: float


@dataclass(frozen=True)
class Attr(VExpr):
    name: str


@dataclass(frozen=True)
class BinOp(VExpr):
    op: str  # one of + - * /
    left: VExpr
    right: VExpr


def vexpr_attrs(e: VExpr) -> set[str]:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Attr):
        return {e.name}
    if isinstance(e, BinOp):
        return vexpr_attrs(e.left) | vexpr_attrs(e.right)
    raise TypeError(f"not a value expression: {e!r}")


# ---------------------------------------------------------------------------
# Query tree

class Query:
    __slots__ = ()


@dataclass(frozen=True)
class RelRef(Query):
    name: str


@dataclass(frozen=True)
class Select(Query):
    source: Query
    cond: Cond


@dataclass(frozen=True)
class ProjectAway(Query):
    source: Query
    drop: tuple[str, ...]


@dataclass(frozen=True)
class Join(Query):
    left: Query
    right: Query


@dataclass(frozen=True)
class DiscUnion(Query):
    left: Query
    right: Query
    tag: str


@dataclass(frozen=True)
class Diff(Query):
    left: Query
    right: Query


@dataclass(frozen=True)
class Rename(Query):
    source: Query
    old: str
    new: str


@dataclass(frozen=True)
class Derive(Query):
    source: Query
    attr: str
    expr: VExpr


@dataclass(frozen=True)
class Aggregate(Query):
    source: Query
    group: tuple[str, ...]
    values: tuple[str, ...]


@dataclass(frozen=True)
class KeyShift(Query):
    """Bijective rewrite of one integer/date/week key: attr := attr + delta."""
    source: Query
    attr: str
    delta: int


_NODE_NAME = {
    RelRef: "relation", Select: "select", ProjectAway: "projaway",
    Join: "join", DiscUnion: "dunion", Diff: "diff", Rename: "rename",
    Derive: "derive", Aggregate: "agg", KeyShift: "keyshift",
}


def node_name(q: Query) -> str:
    return _NODE_NAME[type(q)]


# ---------------------------------------------------------------------------
# Typechecker

def typecheck(q: Query, schema: Mapping[str, Signature]) -> Signature:
    """Derive the result signature of ``q`` or raise :class:`QueryTypeError`.

    Every rejection names the violated rule so callers can report precisely
    which well-formedness condition failed.
    """
    return _typecheck(q, schema, ())


def _fail(rule: str, path: tuple, message: str):
    raise QueryTypeError(rule, path, message)


def _typecheck(q: Query, schema: Mapping[str, Signature], path: tuple) -> Signature:
    path = path + (node_name(q),)

    if isinstance(q, RelRef):
        sig = schema.get(q.name)
        if sig is None:
            _fail("relation-unknown", path, f"no table named {q.name!r}")
        return sig

    if isinstance(q, Select):
        sig = _typecheck(q.source, schema, path)
        bad = cond_attrs(q.cond) - set(sig.key_attrs)
        if bad:
            _fail("select-keys-only", path,
                  f"condition references non-key attributes {sorted(bad)}")
        return sig

    if isinstance(q, ProjectAway):
        sig = _typecheck(q.source, schema, path)
        bad = set(q.drop) - set(sig.value_attrs)
        if bad:
            _fail("projaway-values-only", path,
                  f"cannot project away non-value attributes {sorted(bad)}")
        keep = tuple(a for a in sig.value_attrs if a not in set(q.drop))
        return Signature(sig.key_attrs, keep)

    if isinstance(q, Join):
        ls = _typecheck(q.left, schema, path)
        rs = _typecheck(q.right, schema, path)
        if set(ls.value_attrs) & set(rs.value_attrs):
            _fail("join-values-disjoint", path,
                  f"shared value attributes "
                  f"{sorted(set(ls.value_attrs) & set(rs.value_attrs))}")
        cross = (set(ls.key_attrs) & set(rs.value_attrs)) | \
                (set(ls.value_attrs) & set(rs.key_attrs))
        if cross:
            _fail("join-shared-keys-only", path,
                  f"attributes {sorted(cross)} are a key on one side and a "
                  f"value on the other")
        keys = ls.key_attrs + tuple(a for a in rs.key_attrs if a not in ls.key_attrs)
        return Signature(keys, ls.value_attrs + rs.value_attrs)

    if isinstance(q, DiscUnion):
        ls = _typecheck(q.left, schema, path)
        rs = _typecheck(q.right, schema, path)
        if ls != rs:
            _fail("dunion-signatures-equal", path, f"{ls} vs {rs}")
        if q.tag in ls.attrs:
            _fail("dunion-tag-fresh", path, f"tag {q.tag!r} already present")
        return Signature(ls.key_attrs + (q.tag,), ls.value_attrs)

    if isinstance(q, Diff):
        ls = _typecheck(q.left, schema, path)
        rs = _typecheck(q.right, schema, path)
        if rs.value_attrs:
            _fail("diff-right-keys-only", path,
                  f"right side carries value attributes {list(rs.value_attrs)}; "
                  f"project them away first")
        if rs.key_attrs != ls.key_attrs:
            _fail("diff-keys-equal", path, f"{ls.key_attrs} vs {rs.key_attrs}")
        return ls

    if isinstance(q, Rename):
        sig = _typecheck(q.source, schema, path)
        if q.old not in sig.attrs:
            _fail("rename-unknown-attribute", path, f"no attribute {q.old!r}")
        if q.new in sig.attrs and q.new != q.old:
            _fail("rename-target-fresh", path, f"attribute {q.new!r} already present")
        ren = lambda a: q.new if a == q.old else a
        return Signature(tuple(ren(a) for a in sig.key_attrs),
                         tuple(ren(a) for a in sig.value_attrs))

    if isinstance(q, Derive):
        sig = _typecheck(q.source, schema, path)
        if q.attr in sig.attrs:
            _fail("derive-attr-fresh", path, f"attribute {q.attr!r} already present")
        unknown = vexpr_attrs(q.expr) - set(sig.attrs)
        if unknown:
            _fail("derive-unknown-attribute", path, f"{sorted(unknown)}")
        return Signature(sig.key_attrs, sig.value_attrs + (q.attr,))

    if isinstance(q, Aggregate):
        sig = _typecheck(q.source, schema, path)
        if not set(q.group) <= set(sig.key_attrs):
            _fail("agg-group-on-keys", path,
                  f"grouping attributes {sorted(set(q.group) - set(sig.key_attrs))} "
                  f"are not keys")
        if not set(q.values) <= set(sig.value_attrs):
            _fail("agg-sum-values-only", path,
                  f"aggregated attributes {sorted(set(q.values) - set(sig.value_attrs))} "
                  f"are not values")
        return Signature(tuple(q.group), tuple(q.values))

    if isinstance(q, KeyShift):
        sig = _typecheck(q.source, schema, path)
        if q.attr not in sig.key_attrs:
            _fail("keyshift-key-only", path, f"{q.attr!r} is not a key attribute")
        if not isinstance(q.delta, int):
            _fail("keyshift-integer-delta", path, f"shift must be an integer")
        return sig

    raise TypeError(f"not a query: {q!r}")


# Linearity of derivations is a property of the variables, not of the value
# attributes: a value column such as a row count is variable-free at run
# time even though it is symbolic in the schema.  Products with an actual
# variable-bearing factor on both sides and divisions by variable-bearing or
# zero divisors are therefore rejected during evaluation (NonlinearError /
# DivisorError), not here.


# ---------------------------------------------------------------------------
# Symbolic evaluation

def eval_symbolic(q: Query, instance: Instance) -> STable:
    """Evaluate ``q`` over tables of linear expressions."""
    typecheck(q, instance.schema())
    return _eval(q, instance.tables)


def _eval(q: Query, tables: Mapping[str, STable]) -> STable:
    if isinstance(q, RelRef):
        return tables[q.name]

    if isinstance(q, Select):
        t = _eval(q.source, tables)
        rows = {k: v for k, v in t if _cond_eval(q.cond, t.sig, k)}
        return STable(t.sig, rows)

    if isinstance(q, ProjectAway):
        t = _eval(q.source, tables)
        keep = [i for i, a in enumerate(t.sig.value_attrs) if a not in set(q.drop)]
        sig = Signature(t.sig.key_attrs,
                        tuple(t.sig.value_attrs[i] for i in keep))
        rows = {k: tuple(v[i] for i in keep) for k, v in t}
        return STable(sig, rows)

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
        for rk, rv in rt:
            index.setdefault(tuple(rk[i] for i in r_pos), []).append((rk, rv))
        rows = {}
        for lk, lv in lt:
            probe = tuple(lk[i] for i in l_pos)
            for rk, rv in index.get(probe, ()):
                key = lk + tuple(rk[i] for i in r_extra)
                rows[key] = lv + rv
        return STable(sig, rows)

    if isinstance(q, DiscUnion):
        lt = _eval(q.left, tables)
        rt = _eval(q.right, tables)
        sig = Signature(lt.sig.key_attrs + (q.tag,), lt.sig.value_attrs)
        rows = {}
        for k, v in lt:
            rows[k + (0,)] = v
        for k, v in rt:
            rows[k + (1,)] = v
        return STable(sig, rows)

    if isinstance(q, Diff):
        lt = _eval(q.left, tables)
        rt = _eval(q.right, tables)
        gone = set(rt.rows)
        return STable(lt.sig, {k: v for k, v in lt if k not in gone})

    if isinstance(q, Rename):
        t = _eval(q.source, tables)
        ren = lambda a: q.new if a == q.old else a
        sig = Signature(tuple(ren(a) for a in t.sig.key_attrs),
                        tuple(ren(a) for a in t.sig.value_attrs))
        return STable(sig, t.rows)

    if isinstance(q, Derive):
        t = _eval(q.source, tables)
        sig = Signature(t.sig.key_attrs, t.sig.value_attrs + (q.attr,))
        rows = {}
        for k, v in t:
            rows[k] = v + (_vexpr_eval(q.expr, t.sig, k, v),)
        return STable(sig, rows)

    if isinstance(q, Aggregate):
        t = _eval(q.source, tables)
        g_pos = [t.sig.key_index(a) for a in q.group]
        v_pos = [t.sig.value_index(a) for a in q.values]
        sig = Signature(q.group, q.values)
        acc: dict[tuple, list[LinExpr]] = {}
        for k, v in t:
            gk = tuple(k[i] for i in g_pos)
            cur = acc.get(gk)
            if cur is None:
                acc[gk] = [v[i] for i in v_pos]
            else:
                for j, i in enumerate(v_pos):
                    cur[j] = cur[j].add(v[i])
        return STable(sig, {k: tuple(v) for k, v in acc.items()})

    if isinstance(q, KeyShift):
        t = _eval(q.source, tables)
        pos = t.sig.key_index(q.attr)
        rows = {}
        for k, v in t:
            nk = list(k)
            nk[pos] = key_shift(k[pos], q.delta)
            rows[tuple(nk)] = v
        return STable(t.sig, rows)

    raise TypeError(f"not a query: {q!r}")


def _vexpr_eval(e: VExpr, sig: Signature, key: tuple, values: tuple) -> LinExpr:
    if isinstance(e, Const):
        return LinExpr.of_const(e.value)
    if isinstance(e, Attr):
        if e.name in sig.value_attrs:
            return values[sig.value_index(e.name)]
        kv = key[sig.key_index(e.name)]
        if isinstance(kv, bool) or not isinstance(kv, (int, float)):
            raise KeyVariantError(
                f"key attribute {e.name!r} holds non-numeric value {kv!r}")
        return LinExpr.of_const(float(kv))
    if isinstance(e, BinOp):
        a = _vexpr_eval(e.left, sig, key, values)
        b = _vexpr_eval(e.right, sig, key, values)
        if e.op == "+":
            return a.add(b)
        if e.op == "-":
            return a.sub(b)
        if e.op == "*":
            if b.is_constant():
                return a.scale(b.const)
            if a.is_constant():
                return b.scale(a.const)
            raise NonlinearError("product of two variable-bearing expressions")
        if e.op == "/":
            if not b.is_constant():
                raise DivisorError("division by an expression with variables")
            if b.const == 0.0:
                raise DivisorError("division by zero")
            return LinExpr(a.const / b.const,
                           {v: c / b.const for v, c in a.terms.items()})
        raise TypeError(f"unknown operator {e.op!r}")
    raise TypeError(f"not a value expression: {e!r}")


# ---------------------------------------------------------------------------
# Ground evaluation (independent float path, used as an oracle)

def eval_ground(q: Query, instance: Instance) -> STable:
    """Evaluate ``q`` over a ground instance using plain float arithmetic.

    Raises :class:`GroundnessError` if any input cell has variables.  Kept
    deliberately separate from :func:`eval_symbolic` so the two paths can
    cross-check each other.
    """
    typecheck(q, instance.schema())
    floats: dict[str, tuple[Signature, dict]] = {}
    for name, t in instance.tables.items():
        for k, v in t:
            for e in v:
                if not e.is_constant():
                    raise GroundnessError(
                        f"table {name!r} is not ground at key {k!r}")
        floats[name] = (t.sig, {k: tuple(e.const for e in v) for k, v in t})
    sig, rows = _geval(q, floats)
    return STable(sig, {k: tuple(LinExpr.of_const(x) for x in v)
                        for k, v in rows.items()})


def _geval(q: Query, tables) -> tuple[Signature, dict]:
    if isinstance(q, RelRef):
        return tables[q.name]

    if isinstance(q, Select):
        sig, rows = _geval(q.source, tables)
        return sig, {k: v for k, v in rows.items() if _cond_eval(q.cond, sig, k)}

    if isinstance(q, ProjectAway):
        sig, rows = _geval(q.source, tables)
        keep = [i for i, a in enumerate(sig.value_attrs) if a not in set(q.drop)]
        nsig = Signature(sig.key_attrs, tuple(sig.value_attrs[i] for i in keep))
        return nsig, {k: tuple(v[i] for i in keep) for k, v in rows.items()}

    if isinstance(q, Join):
        ls, lrows = _geval(q.left, tables)
        rs, rrows = _geval(q.right, tables)
        shared = [a for a in ls.key_attrs if a in rs.key_attrs]
        l_pos = [ls.key_index(a) for a in shared]
        r_pos = [rs.key_index(a) for a in shared]
        r_extra = [i for i, a in enumerate(rs.key_attrs) if a not in shared]
        nsig = Signature(ls.key_attrs + tuple(rs.key_attrs[i] for i in r_extra),
                         ls.value_attrs + rs.value_attrs)
        index: dict[tuple, list] = {}
        for rk, rv in rrows.items():
            index.setdefault(tuple(rk[i] for i in r_pos), []).append((rk, rv))
        out = {}
        for lk, lv in lrows.items():
            for rk, rv in index.get(tuple(lk[i] for i in l_pos), ()):
                out[lk + tuple(rk[i] for i in r_extra)] = lv + rv
        return nsig, out

    if isinstance(q, DiscUnion):
        ls, lrows = _geval(q.left, tables)
        _, rrows = _geval(q.right, tables)
        nsig = Signature(ls.key_attrs + (q.tag,), ls.value_attrs)
        out = {}
        for k, v in lrows.items():
            out[k + (0,)] = v
        for k, v in rrows.items():
            out[k + (1,)] = v
        return nsig, out

    if isinstance(q, Diff):
        ls, lrows = _geval(q.left, tables)
        _, rrows = _geval(q.right, tables)
        return ls, {k: v for k, v in lrows.items() if k not in rrows}

    if isinstance(q, Rename):
        sig, rows = _geval(q.source, tables)
        ren = lambda a: q.new if a == q.old else a
        nsig = Signature(tuple(ren(a) for a in sig.key_attrs),
                         tuple(ren(a) for a in sig.value_attrs))
        return nsig, rows

    if isinstance(q, Derive):
        sig, rows = _geval(q.source, tables)
        nsig = Signature(sig.key_attrs, sig.value_attrs + (q.attr,))
        out = {}
        for k, v in rows.items():
            out[k] = v + (_gexpr_eval(q.expr, sig, k, v),)
        return nsig, out

    if isinstance(q, Aggregate):
        sig, rows = _geval(q.source, tables)
        g_pos = [sig.key_index(a) for a in q.group]
        v_pos = [sig.value_index(a) for a in q.values]
        nsig = Signature(q.group, q.values)
        order = sorted(rows, key=lambda k: _gsort(k))
        acc: dict[tuple, list[float]] = {}
        for k in order:
            gk = tuple(k[i] for i in g_pos)
            v = rows[k]
            cur = acc.get(gk)
            if cur is None:
                acc[gk] = [v[i] for i in v_pos]
            else:
                for j, i in enumerate(v_pos):
                    cur[j] += v[i]
        return nsig, {k: tuple(v) for k, v in acc.items()}

    if isinstance(q, KeyShift):
        sig, rows = _geval(q.source, tables)
        pos = sig.key_index(q.attr)
        out = {}
        for k, v in rows.items():
            nk = list(k)
            nk[pos] = key_shift(k[pos], q.delta)
            out[tuple(nk)] = v
        return sig, out

    raise TypeError(f"not a query: {q!r}")


def _gsort(key: tuple):
    from .model import row_sort_token
    return row_sort_token(key)


def _gexpr_eval(e: VExpr, sig: Signature, key: tuple, values: tuple) -> float:
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Attr):
        if e.name in sig.value_attrs:
            return values[sig.value_index(e.name)]
        kv = key[sig.key_index(e.name)]
        if isinstance(kv, bool) or not isinstance(kv, (int, float)):
            raise KeyVariantError(
                f"key attribute {e.name!r} holds non-numeric value {kv!r}")
        return float(kv)
    if isinstance(e, BinOp):
        a = _gexpr_eval(e.left, sig, key, values)
        b = _gexpr_eval(e.right, sig, key, values)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise DivisorError("division by zero")
            return a / b
        raise TypeError(f"unknown operator {e.op!r}")
    raise TypeError(f"not a value expression: {e!r}")


# ---------------------------------------------------------------------------
# Valuations

def apply_valuation(table: STable, h: Valuation) -> STable:
    """Replace every cell by its constant value under ``h``; keys unchanged."""
    rows = {k: tuple(LinExpr.of_const(e.eval(h)) for e in v) for k, v in table}
    return STable(table.sig, rows)


def apply_valuation_instance(instance: Instance, h: Valuation) -> Instance:
    return Instance({n: apply_valuation(t, h) for n, t in instance.tables.items()},
                    instance.catalog)
