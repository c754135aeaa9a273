"""Textual language for declaring schemas, encoding policies, views, settings.

A document is a sequence of statements::

    table ReportedDistrict(district: text, week: week | cases)
    policy ReportedDistrict.cases = error
    set lag 3
    view SumOfCases := ReportedCountry fuse agg(week; sum cases)(ReportedDistrict)

Queries use functional syntax: ``select(c)(q)``, ``projaway(a, b)(q)``,
``join(q, q')``, ``dunion(tag)(q, q')``, ``diff(q, q')``,
``rename(a -> b)(q)``, ``derive(a := e)(q)``, ``agg(keys; sum v, ...)(q)``
and ``keyshift(a := a + 3)(q)``.  ``fuse`` (or the symbol form) combines
queries at view level.  ``avg`` and ``count`` aggregates are macros over sum,
count, and a final division.  Group keys may be shifted inline:
``agg(r, w+3; sum c)(q)`` wraps the source in a key shift.

Settings are numeric constants; ``$name`` references them in key shifts and
derivation expressions and must be declared before use.  The parser resolves
references immediately, so the printed form of a document is fully explicit.
Parsing the printed form yields the same document (round-trip stable).

The full grammar lives in docs/spec-language.md.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from . import algebra
from .algebra import (Aggregate, AndCond, Attr, BinOp, CmpAttrs, CmpLit, Cond,
                      Const, Derive, Diff, DiscUnion, Join, KeyShift, NotCond,
                      ProjectAway, Query, RelRef, Rename, Select, TrueCond,
                      VExpr)
from .align import AlignmentSpec, ViewDef
from .errors import ParseError, SpecValidationError
from .ingest import EncodingPolicy, KeyType, TableSchema
from .model import KeyValue, Signature, Week, format_real


# ---------------------------------------------------------------------------
# Document model

@dataclass(frozen=True)
class TableDecl:
    name: str
    keys: tuple[tuple[str, KeyType], ...]
    values: tuple[str, ...]


@dataclass(frozen=True)
class PolicyDecl:
    table: str
    column: str
    policy: EncodingPolicy


@dataclass(frozen=True)
class SetDecl:
    name: str
    value: float


@dataclass(frozen=True)
class ViewDecl:
    name: str
    queries: tuple[Query, ...]


Statement = Union[TableDecl, PolicyDecl, SetDecl, ViewDecl]


@dataclass
class SpecDocument:
    statements: tuple[Statement, ...]

    @property
    def tables(self) -> dict[str, TableDecl]:
        return {s.name: s for s in self.statements if isinstance(s, TableDecl)}

    @property
    def views(self) -> tuple[ViewDecl, ...]:
        return tuple(s for s in self.statements if isinstance(s, ViewDecl))

    @property
    def settings(self) -> dict[str, float]:
        return {s.name: s.value for s in self.statements if isinstance(s, SetDecl)}

    @property
    def policies(self) -> dict[tuple[str, str], EncodingPolicy]:
        return {(s.table, s.column): s.policy
                for s in self.statements if isinstance(s, PolicyDecl)}

    def __eq__(self, other):
        if not isinstance(other, SpecDocument):
            return NotImplemented
        return self.statements == other.statements


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(r"""
      (?P<ws>[ \t\r]+)
    | (?P<comment>\#[^\n]*)
    | (?P<nl>\n)
    | (?P<week>\d{4}W\d{2})
    | (?P<date>\d{4}-\d{2}-\d{2})
    | (?P<number>\d+(\.\d+)?([eE][+-]?\d+)?)
    | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<string>"(?:[^"\n]|"")*")
    | (?P<op>:=|->|<=|>=|!=|[(),;|:.$+\-*/=<>]|⊔|¬|∧)
""", re.VERBOSE)

_SYMBOL_ALIAS = {"⊔": "fuse", "¬": "not", "∧": "and"}


@dataclass(frozen=True)
class Token:
    kind: str  # week | date | number | name | string | op | eof
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[Token]:
    tokens = []
    line, col, i = 1, 1, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError(line, col, "a token", repr(text[i]))
        kind = m.lastgroup
        raw = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind not in ("ws", "comment"):
            tok_text = raw
            tok_kind = kind
            if kind == "op" and raw in _SYMBOL_ALIAS:
                tok_kind, tok_text = "name", _SYMBOL_ALIAS[raw]
            tokens.append(Token(tok_kind, tok_text, line, col))
            col += len(raw)
        else:
            col += len(raw)
        i = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser

_QUERY_OPS = {"select", "projaway", "join", "dunion", "diff", "rename",
              "derive", "agg", "keyshift"}
_KEY_TYPES = {"text": KeyType.TEXT, "int": KeyType.INTEGER,
              "decimal": KeyType.DECIMAL, "date": KeyType.DATE,
              "week": KeyType.WEEK}


class _Parser:
    def __init__(self, tokens: list[Token],
                 presets: Optional[Mapping[str, float]] = None):
        self.tokens = tokens
        self.i = 0
        self.settings: dict[str, float] = {}
        self.presets = dict(presets or {})
        self.counter = 0

    # -- token plumbing

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, expected: str):
        t = self.tok
        found = t.text if t.kind != "eof" else "end of input"
        raise ParseError(t.line, t.col, expected, found)

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def at_op(self, text: str) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def at_word(self, text: str) -> bool:
        return self.tok.kind == "name" and self.tok.text == text

    def expect_op(self, text: str) -> Token:
        if not self.at_op(text):
            self.error(f"'{text}'")
        return self.advance()

    def expect_word(self, text: str) -> Token:
        if not self.at_word(text):
            self.error(f"'{text}'")
        return self.advance()

    def expect_name(self, what: str = "a name") -> str:
        if self.tok.kind != "name":
            self.error(what)
        return self.advance().text

    # -- document

    def document(self) -> SpecDocument:
        statements: list[Statement] = []
        while self.tok.kind != "eof":
            if self.at_word("table"):
                statements.append(self.table_decl())
            elif self.at_word("policy"):
                statements.append(self.policy_decl())
            elif self.at_word("set"):
                statements.append(self.set_decl())
            elif self.at_word("view"):
                statements.append(self.view_decl())
            else:
                self.error("'table', 'policy', 'set', or 'view'")
        return SpecDocument(tuple(statements))

    def table_decl(self) -> TableDecl:
        self.expect_word("table")
        name = self.expect_name("a table name")
        self.expect_op("(")
        keys = [self.key_field()]
        while self.at_op(","):
            self.advance()
            keys.append(self.key_field())
        self.expect_op("|")
        values: list[str] = []
        if not self.at_op(")"):
            values.append(self.expect_name("a value attribute"))
            while self.at_op(","):
                self.advance()
                values.append(self.expect_name("a value attribute"))
        self.expect_op(")")
        return TableDecl(name, tuple(keys), tuple(values))

    def key_field(self) -> tuple[str, KeyType]:
        name = self.expect_name("a key attribute")
        self.expect_op(":")
        tname = self.expect_name("a key type")
        if tname not in _KEY_TYPES:
            raise ParseError(self.tokens[self.i - 1].line,
                             self.tokens[self.i - 1].col,
                             "one of text/int/decimal/date/week", tname)
        return name, _KEY_TYPES[tname]

    def policy_decl(self) -> PolicyDecl:
        self.expect_word("policy")
        table = self.expect_name("a table name")
        self.expect_op(".")
        column = self.expect_name("a column name")
        self.expect_op("=")
        if self.at_word("exact"):
            self.advance()
            pol = EncodingPolicy.exact()
        elif self.at_word("error"):
            self.advance()
            pol = EncodingPolicy.error()
        elif self.at_word("null"):
            self.advance()
            pol = EncodingPolicy.null()
        elif self.at_word("guess"):
            self.advance()
            self.expect_op("(")
            pol = EncodingPolicy.guess(self.signed_number())
            self.expect_op(")")
        else:
            self.error("'exact', 'error', 'null', or 'guess'")
        return PolicyDecl(table, column, pol)

    def set_decl(self) -> SetDecl:
        self.expect_word("set")
        name = self.expect_name("a setting name")
        value = self.signed_number()
        if name not in self.presets:
            self.settings[name] = value
        else:
            self.settings[name] = self.presets[name]
            value = self.presets[name]
        return SetDecl(name, value)

    def view_decl(self) -> ViewDecl:
        self.expect_word("view")
        name = self.expect_name("a view name")
        self.expect_op(":=")
        queries = [self.query()]
        while self.at_word("fuse"):
            self.advance()
            queries.append(self.query())
        return ViewDecl(name, tuple(queries))

    # -- queries

    def query(self) -> Query:
        if self.at_op("("):
            self.advance()
            q = self.query()
            self.expect_op(")")
            return q
        if self.tok.kind != "name":
            self.error("a query")
        word = self.tok.text
        if word in _QUERY_OPS:
            return self.op_call(word)
        self.advance()
        return RelRef(word)

    def op_call(self, word: str) -> Query:
        self.advance()
        self.expect_op("(")
        if word == "select":
            cond = self.condition()
            self.expect_op(")")
            return Select(self.argument(), cond)
        if word == "projaway":
            names = self.name_list("a value attribute")
            self.expect_op(")")
            return ProjectAway(self.argument(), tuple(names))
        if word == "join":
            left = self.query()
            self.expect_op(",")
            right = self.query()
            self.expect_op(")")
            return Join(left, right)
        if word == "dunion":
            tag = self.expect_name("a tag attribute")
            self.expect_op(")")
            self.expect_op("(")
            left = self.query()
            self.expect_op(",")
            right = self.query()
            self.expect_op(")")
            return DiscUnion(left, right, tag)
        if word == "diff":
            left = self.query()
            self.expect_op(",")
            right = self.query()
            self.expect_op(")")
            return Diff(left, right)
        if word == "rename":
            old = self.expect_name("an attribute")
            self.expect_op("->")
            new = self.expect_name("an attribute")
            self.expect_op(")")
            return Rename(self.argument(), old, new)
        if word == "derive":
            attr = self.expect_name("an attribute")
            self.expect_op(":=")
            expr = self.vexpr()
            self.expect_op(")")
            return Derive(self.argument(), attr, expr)
        if word == "keyshift":
            attr = self.expect_name("a key attribute")
            self.expect_op(":=")
            again = self.expect_name("the same attribute")
            if again != attr:
                self.error(f"'{attr}'")
            delta = self.shift_amount()
            self.expect_op(")")
            return KeyShift(self.argument(), attr, delta)
        if word == "agg":
            group: list[tuple[str, int]] = []
            if not self.at_op(";"):
                group.append(self.group_key())
                while self.at_op(","):
                    self.advance()
                    group.append(self.group_key())
            self.expect_op(";")
            aggs = [self.agg_item()]
            while self.at_op(","):
                self.advance()
                aggs.append(self.agg_item())
            self.expect_op(")")
            source = self.argument()
            return self.build_aggregate(group, aggs, source)
        self.error("a query operator")

    def argument(self) -> Query:
        self.expect_op("(")
        q = self.query()
        self.expect_op(")")
        return q

    def name_list(self, what: str) -> list[str]:
        names = [self.expect_name(what)]
        while self.at_op(","):
            self.advance()
            names.append(self.expect_name(what))
        return names

    def group_key(self) -> tuple[str, int]:
        name = self.expect_name("a key attribute")
        delta = 0
        if self.at_op("+") or self.at_op("-"):
            sign = 1 if self.advance().text == "+" else -1
            delta = sign * self.shift_magnitude()
        return name, delta

    def shift_amount(self) -> int:
        if self.at_op("+") or self.at_op("-"):
            sign = 1 if self.advance().text == "+" else -1
            return sign * self.shift_magnitude()
        self.error("'+' or '-'")

    def shift_magnitude(self) -> int:
        if self.at_op("$"):
            self.advance()
            name = self.expect_name("a setting name")
            value = self.lookup_setting(name)
            if value != int(value):
                self.error(f"an integer-valued setting (got {value})")
            return int(value)
        if self.tok.kind != "number":
            self.error("an integer")
        t = self.advance()
        if any(ch in t.text for ch in ".eE"):
            raise ParseError(t.line, t.col, "an integer", t.text)
        return int(t.text)

    def lookup_setting(self, name: str) -> float:
        if name in self.presets:
            return self.presets[name]
        if name in self.settings:
            return self.settings[name]
        self.error(f"a setting declared before use ({name!r} is unknown)")

    def build_aggregate(self, group, aggs, source: Query) -> Query:
        for name, delta in group:
            if delta:
                source = KeyShift(source, name, delta)
        group_names = tuple(name for name, _ in group)
        targets = [a[1] for a in aggs]
        if len(set(targets)) != len(targets):
            self.error("distinct aggregate targets")
        sums = [a[1] for a in aggs if a[0] == "sum"]
        counts = [a[1] for a in aggs if a[0] == "count"]
        avgs = [a[1] for a in aggs if a[0] == "avg"]
        if not counts and not avgs:
            return Aggregate(source, group_names, tuple(sums))
        # count/avg desugar to sum over a derived all-ones column plus a
        # final division by the (variable-free) count
        self.counter += 1
        cnt = f"__n{self.counter}"
        source = Derive(source, cnt, Const(1.0))
        q: Query = Aggregate(source, group_names,
                             tuple(sums) + tuple(avgs) + (cnt,))
        drop: list[str] = []
        for attr in avgs:
            q = Derive(q, f"__avg_{attr}", BinOp("/", Attr(attr), Attr(cnt)))
            drop.append(attr)
        for attr in counts[1:]:
            q = Derive(q, attr, Attr(cnt))
        if counts:
            q = Rename(q, cnt, counts[0])
        else:
            drop.append(cnt)
        q = ProjectAway(q, tuple(drop)) if drop else q
        for attr in avgs:
            q = Rename(q, f"__avg_{attr}", attr)
        return q

    def agg_item(self) -> tuple[str, str]:
        if self.tok.kind != "name" or self.tok.text not in ("sum", "count", "avg"):
            self.error("'sum', 'count', or 'avg'")
        kind = self.advance().text
        return kind, self.expect_name("a value attribute")

    # -- conditions

    def condition(self) -> Cond:
        left = self.cond_unary()
        while self.at_word("and"):
            self.advance()
            left = AndCond(left, self.cond_unary())
        return left

    def cond_unary(self) -> Cond:
        if self.at_word("not"):
            self.advance()
            return NotCond(self.cond_unary())
        return self.cond_atom()

    def cond_atom(self) -> Cond:
        if self.at_op("("):
            self.advance()
            c = self.condition()
            self.expect_op(")")
            return c
        if self.at_word("true"):
            self.advance()
            return TrueCond()
        attr = self.expect_name("an attribute or 'true'")
        for op in ("<=", ">=", "!=", "=", "<", ">"):
            if self.at_op(op):
                self.advance()
                break
        else:
            self.error("a comparison operator")
        if self.tok.kind == "name":
            other = self.advance().text
            return _attr_cmp(op, attr, other)
        lit = self.literal()
        return _lit_cmp(op, attr, lit)

    def literal(self) -> KeyValue:
        t = self.tok
        if t.kind == "week":
            self.advance()
            return Week.parse(t.text)
        if t.kind == "date":
            self.advance()
            return datetime.date.fromisoformat(t.text)
        if t.kind == "string":
            self.advance()
            return t.text[1:-1].replace('""', '"')
        if t.kind == "number" or self.at_op("-"):
            return self.signed_scalar()
        self.error("a literal")

    def signed_scalar(self) -> Union[int, float]:
        sign = 1
        if self.at_op("-"):
            self.advance()
            sign = -1
        t = self.tok
        if t.kind != "number":
            self.error("a number")
        self.advance()
        if any(ch in t.text for ch in ".eE"):
            return sign * float(t.text)
        return sign * int(t.text)

    def signed_number(self) -> float:
        return float(self.signed_scalar())

    # -- derivation expressions

    def vexpr(self) -> VExpr:
        left = self.vterm()
        while self.at_op("+") or self.at_op("-"):
            op = self.advance().text
            left = BinOp(op, left, self.vterm())
        return left

    def vterm(self) -> VExpr:
        left = self.vfactor()
        while self.at_op("*") or self.at_op("/"):
            op = self.advance().text
            left = BinOp(op, left, self.vfactor())
        return left

    def vfactor(self) -> VExpr:
        if self.at_op("("):
            self.advance()
            e = self.vexpr()
            self.expect_op(")")
            return e
        if self.at_op("-"):
            self.advance()
            return BinOp("-", Const(0.0), self.vfactor())
        if self.at_op("$"):
            self.advance()
            return Const(self.lookup_setting(self.expect_name("a setting name")))
        if self.tok.kind == "number":
            t = self.advance()
            return Const(float(t.text))
        if self.tok.kind == "name":
            return Attr(self.advance().text)
        self.error("a number, attribute, or parenthesized expression")


def _attr_cmp(op: str, a: str, b: str) -> Cond:
    if op == "=":
        return CmpAttrs("=", a, b)
    if op == "<":
        return CmpAttrs("<", a, b)
    if op == ">":
        return CmpAttrs("<", b, a)
    if op == "!=":
        return NotCond(CmpAttrs("=", a, b))
    if op == "<=":
        return NotCond(CmpAttrs("<", b, a))
    if op == ">=":
        return NotCond(CmpAttrs("<", a, b))
    raise AssertionError(op)


def _lit_cmp(op: str, attr: str, lit: KeyValue) -> Cond:
    if op in ("=", "<", ">"):
        return CmpLit(op, attr, lit)
    if op == "!=":
        return NotCond(CmpLit("=", attr, lit))
    if op == "<=":
        return NotCond(CmpLit(">", attr, lit))
    if op == ">=":
        return NotCond(CmpLit("<", attr, lit))
    raise AssertionError(op)


def parse(text: str, presets: Optional[Mapping[str, float]] = None) -> SpecDocument:
    """Parse a document; ``presets`` override ``set`` statements by name."""
    return _Parser(_tokenize(text), presets).document()


# ---------------------------------------------------------------------------
# Printer (canonical form; parse(print(parse(t))) == parse(t))

_TYPE_NAME = {KeyType.TEXT: "text", KeyType.INTEGER: "int",
              KeyType.DECIMAL: "decimal", KeyType.DATE: "date",
              KeyType.WEEK: "week"}


def print_document(doc: SpecDocument) -> str:
    lines = []
    for s in doc.statements:
        if isinstance(s, TableDecl):
            keys = ", ".join(f"{n}: {_TYPE_NAME[t]}" for n, t in s.keys)
            vals = ", ".join(s.values)
            sep = " | " if s.values else " |"
            lines.append(f"table {s.name}({keys}{sep}{vals})")
        elif isinstance(s, PolicyDecl):
            lines.append(f"policy {s.table}.{s.column} = {s.policy}")
        elif isinstance(s, SetDecl):
            lines.append(f"set {s.name} {format_real(s.value)}")
        elif isinstance(s, ViewDecl):
            body = " fuse ".join(print_query(q) for q in s.queries)
            lines.append(f"view {s.name} := {body}")
    return "\n".join(lines) + "\n"


def print_query(q: Query) -> str:
    if isinstance(q, RelRef):
        return q.name
    if isinstance(q, Select):
        return f"select({print_cond(q.cond)})({print_query(q.source)})"
    if isinstance(q, ProjectAway):
        return f"projaway({', '.join(q.drop)})({print_query(q.source)})"
    if isinstance(q, Join):
        return f"join({print_query(q.left)}, {print_query(q.right)})"
    if isinstance(q, DiscUnion):
        return (f"dunion({q.tag})({print_query(q.left)}, "
                f"{print_query(q.right)})")
    if isinstance(q, Diff):
        return f"diff({print_query(q.left)}, {print_query(q.right)})"
    if isinstance(q, Rename):
        return f"rename({q.old} -> {q.new})({print_query(q.source)})"
    if isinstance(q, Derive):
        return (f"derive({q.attr} := {print_vexpr(q.expr)})"
                f"({print_query(q.source)})")
    if isinstance(q, Aggregate):
        aggs = ", ".join(f"sum {a}" for a in q.values)
        return (f"agg({', '.join(q.group)}; {aggs})"
                f"({print_query(q.source)})")
    if isinstance(q, KeyShift):
        sign = "+" if q.delta >= 0 else "-"
        return (f"keyshift({q.attr} := {q.attr} {sign} {abs(q.delta)})"
                f"({print_query(q.source)})")
    raise TypeError(f"not a query: {q!r}")


def print_cond(c: Cond) -> str:
    if isinstance(c, TrueCond):
        return "true"
    if isinstance(c, CmpAttrs):
        return f"{c.left} {c.op} {c.right}"
    if isinstance(c, CmpLit):
        return f"{c.attr} {c.op} {print_literal(c.literal)}"
    if isinstance(c, NotCond):
        inner = print_cond(c.inner)
        if isinstance(c.inner, AndCond):
            inner = f"({inner})"
        return f"not {inner}"
    if isinstance(c, AndCond):
        left = print_cond(c.left)
        right = print_cond(c.right)
        if isinstance(c.right, AndCond):
            right = f"({right})"
        return f"{left} and {right}"
    raise TypeError(f"not a condition: {c!r}")


def print_literal(v: KeyValue) -> str:
    if isinstance(v, Week):
        return str(v)
    if isinstance(v, datetime.date):
        return v.isoformat()
    if isinstance(v, str):
        return '"' + v.replace('"', '""') + '"'
    if isinstance(v, bool):
        raise TypeError("boolean literals are not key values")
    if isinstance(v, int):
        return str(v)
    return format_real(v)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def print_vexpr(e: VExpr, outer: int = 0) -> str:
    if isinstance(e, Const):
        return format_real(e.value)
    if isinstance(e, Attr):
        return e.name
    if isinstance(e, BinOp):
        prec = _PREC[e.op]
        left = print_vexpr(e.left, prec)
        # right operand of - and / binds one level tighter
        right = print_vexpr(e.right, prec + (1 if e.op in "-/" else 0))
        s = f"{left} {e.op} {right}"
        return f"({s})" if prec < outer else s
    raise TypeError(f"not a value expression: {e!r}")


# ---------------------------------------------------------------------------
# Validation

@dataclass
class ValidatedSpec:
    """Typechecked document: schemas, policies, settings, and the alignment."""

    schemas: dict[str, TableSchema]
    policies: dict[tuple[str, str], EncodingPolicy]
    settings: dict[str, float]
    alignment: AlignmentSpec
    view_signatures: dict[str, Signature]


def validate(doc: SpecDocument) -> ValidatedSpec:
    """Resolve names and typecheck every view; raises on any dangling reference."""
    schemas: dict[str, TableSchema] = {}
    for name, decl in doc.tables.items():
        schemas[name] = TableSchema(name, decl.keys, decl.values)

    for (table, column), policy in doc.policies.items():
        decl = doc.tables.get(table)
        if decl is None:
            raise SpecValidationError(f"policy for unknown table {table!r}")
        if column in (k for k, _ in decl.keys):
            if not policy.is_exact():
                raise SpecValidationError(
                    f"key column {table}.{column} must stay exact")
            continue
        if column not in decl.values:
            raise SpecValidationError(
                f"policy for unknown column {table}.{column}")

    source_schema = {name: s.signature for name, s in schemas.items()}
    alignment = AlignmentSpec(source_schema,
                              tuple(ViewDef(v.name, v.queries)
                                    for v in doc.views))
    view_sigs = alignment.derived_schema()
    return ValidatedSpec(schemas, doc.policies, doc.settings,
                         alignment, view_sigs)
