"""Fusion, coalescing, and alignment specifications.

Coalescing removes discriminant key attributes: rows that collide on the
remaining keys but disagree on values are replaced by a single row of fresh
LLUN ("consensus") variables, and one equation per colliding row and value
attribute records what that consensus must equal.  Fusion of n tables is a
discriminated union over an n-valued tag followed by coalescing the tag away.

An alignment specification is an ordered list of view definitions, each the
fusion of one or more queries; running it yields the derived instance plus
the conjunction of all emitted equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

from . import algebra
from .errors import QueryTypeError, SignatureMismatchError
from .model import (Instance, LinExpr, STable, Signature, VarCatalog, VarKind,
                    row_sort_token)


@dataclass(frozen=True)
class Constraint:
    """One linear equation, interpreted lhs = rhs."""

    lhs: LinExpr
    rhs: LinExpr

    def normalized(self) -> LinExpr:
        """lhs - rhs, i.e. the expression that must equal zero."""
        return self.lhs.sub(self.rhs)

    def substitute(self, var: int, replacement: LinExpr) -> "Constraint":
        return Constraint(_substitute(self.lhs, var, replacement),
                          _substitute(self.rhs, var, replacement))

    def variables(self) -> set[int]:
        return self.lhs.variables() | self.rhs.variables()

    def format(self, catalog: Optional[VarCatalog] = None) -> str:
        return f"{self.lhs.format(catalog)} = {self.rhs.format(catalog)}"


def _substitute(e: LinExpr, var: int, replacement: LinExpr) -> LinExpr:
    coeff = e.terms.get(var)
    if coeff is None:
        return e
    rest = LinExpr(e.const, {v: c for v, c in e.terms.items() if v != var})
    return rest.add(replacement.scale(coeff))


@dataclass
class ConstrainedSTable:
    table: STable
    constraints: tuple[Constraint, ...] = ()


def coalesce(drop: Sequence[str],
             source: Union[STable, ConstrainedSTable],
             catalog: VarCatalog,
             origin: Optional[str] = None) -> ConstrainedSTable:
    """Remove key attributes ``drop``, reconciling the collisions.

    Rows that agree on the remaining keys and agree structurally on every
    value keep their values and emit nothing.  Rows that disagree are merged
    into one row of fresh consensus variables, with one equation per
    colliding row and value attribute.
    """
    if isinstance(source, STable):
        source = ConstrainedSTable(source, ())
    t = source.table
    sig = t.sig
    drop_set = set(drop)
    if not drop_set <= set(sig.key_attrs):
        raise SignatureMismatchError(
            f"coalesce attributes {sorted(drop_set - set(sig.key_attrs))} "
            f"are not keys of {sig}")
    keep_pos = [i for i, a in enumerate(sig.key_attrs) if a not in drop_set]
    out_sig = Signature(tuple(sig.key_attrs[i] for i in keep_pos),
                        sig.value_attrs)

    groups: dict[tuple, list[tuple]] = {}
    for key, values in t:
        gk = tuple(key[i] for i in keep_pos)
        groups.setdefault(gk, []).append(values)

    rows = {}
    equations: list[Constraint] = []
    prefix = f"{origin}(" if origin else "consensus("
    for gk in sorted(groups, key=row_sort_token):
        members = groups[gk]
        first = members[0]
        if len(members) == 1 or all(vs == first for vs in members[1:]):
            rows[gk] = first
            continue
        key_txt = ",".join(str(v) for v in gk)
        lluns = [catalog.fresh(VarKind.LLUN, f"{prefix}{key_txt}).{attr}")
                 for attr in sig.value_attrs]
        rows[gk] = tuple(LinExpr.of_var(v) for v in lluns)
        for vs in members:
            for llun, cell in zip(lluns, vs):
                equations.append(Constraint(LinExpr.of_var(llun), cell))

    return ConstrainedSTable(STable(out_sig, rows),
                             source.constraints + tuple(equations))


_FUSE_TAG = "__origin"


def fuse(tables: Sequence[STable],
         catalog: VarCatalog,
         origin: Optional[str] = None) -> ConstrainedSTable:
    """n-way fusion: discriminated union over one n-valued tag, coalesced away."""
    if not tables:
        raise SignatureMismatchError("fusion of zero tables")
    sig = tables[0].sig
    for t in tables[1:]:
        if t.sig != sig:
            raise SignatureMismatchError(f"cannot fuse {t.sig} with {sig}")
    if len(tables) == 1:
        return ConstrainedSTable(tables[0], ())

    tag = _FUSE_TAG
    while tag in sig.attrs:
        tag += "_"
    union_sig = Signature(sig.key_attrs + (tag,), sig.value_attrs)
    rows = {}
    for i, t in enumerate(tables):
        for key, values in t:
            rows[key + (i,)] = values
    return coalesce([tag], STable(union_sig, rows), catalog, origin=origin)


# ---------------------------------------------------------------------------
# Alignment specifications

@dataclass(frozen=True)
class ViewDef:
    name: str
    queries: tuple[algebra.Query, ...]


@dataclass
class AlignmentSpec:
    """Ordered view definitions over a source schema.

    Each view is the fusion of one or more queries; queries may reference the
    source tables and any previously defined view.
    """

    source_schema: dict[str, Signature]
    views: tuple[ViewDef, ...]

    def derived_schema(self) -> dict[str, Signature]:
        """Typecheck every view in order; returns the schema of the views."""
        env = dict(self.source_schema)
        derived: dict[str, Signature] = {}
        for view in self.views:
            if view.name in env:
                raise QueryTypeError("view-name-fresh", (view.name,),
                                     f"name {view.name!r} already bound")
            sigs = [algebra.typecheck(q, env) for q in view.queries]
            for s in sigs[1:]:
                if s != sigs[0]:
                    raise QueryTypeError(
                        "view-members-same-signature", (view.name,),
                        f"fusion members have signatures {sigs[0]} and {s}")
            env[view.name] = sigs[0]
            derived[view.name] = sigs[0]
        return derived


def run_spec(spec: AlignmentSpec,
             instance: Instance,
             evaluate: Optional[Callable[[algebra.Query, Instance], STable]] = None,
             ) -> tuple[Instance, list[Constraint]]:
    """Evaluate every view in order, fusing members and collecting equations.

    Returns the derived instance (views only) and the conjunction of all
    equations emitted by the fusions.
    """
    spec.derived_schema()
    if evaluate is None:
        evaluate = algebra.eval_symbolic
    catalog = instance.catalog
    env = instance
    derived: dict[str, STable] = {}
    constraints: list[Constraint] = []
    for view in spec.views:
        results = [evaluate(q, env) for q in view.queries]
        fused = fuse(results, catalog, origin=view.name)
        constraints.extend(fused.constraints)
        derived[view.name] = fused.table
        env = env.with_tables({view.name: fused.table})
    return Instance(derived, catalog), constraints


# ---------------------------------------------------------------------------
# Consensus-variable elimination

@dataclass
class Elimination:
    """Constraints with consensus variables eliminated.

    ``definitions`` maps each eliminated variable to its first defining
    expression; applying them in ascending id order reconstructs the
    eliminated values from a solved valuation.
    """

    constraints: list[Constraint]
    definitions: dict[int, LinExpr] = field(default_factory=dict)


def _bare_llun(e: LinExpr, catalog: VarCatalog) -> Optional[int]:
    if e.const == 0.0 and len(e.terms) == 1:
        (var, coeff), = e.terms.items()
        if coeff == 1.0 and catalog.kind(var) is VarKind.LLUN:
            return var
    return None


def eliminate_lluns(constraints: Sequence[Constraint],
                    catalog: VarCatalog) -> Elimination:
    """Rewrite defining groups {L = e1, L = e2, ...} to {e1 = e2, e1 = e3, ...}.

    Zero-weight consensus variables disappear from the system; occurrences of
    an eliminated variable inside other constraints are replaced by its first
    defining expression.  Later variables are eliminated first, so a defining
    expression only ever references earlier (already reconstructible) ones.
    """
    defs: dict[int, list[LinExpr]] = {}
    others: list[Constraint] = []
    for c in constraints:
        var = _bare_llun(c.lhs, catalog)
        if var is not None:
            defs.setdefault(var, []).append(c.rhs)
        else:
            others.append(c)

    out = list(others)
    definitions: dict[int, LinExpr] = {}
    for var in sorted(defs, reverse=True):
        exprs = defs[var]
        first = exprs[0]
        pairs = [Constraint(first, e) for e in exprs[1:]]
        out = pairs + out
        out = [c.substitute(var, first) for c in out]
        definitions[var] = first
    return Elimination(out, definitions)


def constraint_lines(constraints: Sequence[Constraint],
                     catalog: Optional[VarCatalog] = None) -> list[str]:
    """One deterministic, label-bearing line per equation."""
    return [c.format(catalog) for c in constraints]
