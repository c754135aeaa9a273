"""Core domain types: key values, variables, sparse linear expressions, tables.

Value cells hold :class:`LinExpr`, a sparse linear expression ``a0 + sum(ai * xi)``
over a session-global variable space.  Key cells hold discrete ground values
(text, integers, decimals, dates, or ISO calendar weeks).  Tables are finite
maps from key tuples to value tuples, so the functional dependency from keys
to values holds by construction.

All types here are immutable after construction and safe to share across
threads; the one mutable object is :class:`VarCatalog`, an append-only
allocator guarded by a lock.
"""

from __future__ import annotations

import datetime
import enum
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Union

from .errors import EngineError, KeyVariantError


@dataclass(frozen=True)
class Week:
    """ISO calendar week (year, week).  Arithmetic rolls over year boundaries."""

    year: int
    week: int

    def __post_init__(self):
        # Raises ValueError for weeks that do not exist in the given year.
        datetime.date.fromisocalendar(self.year, self.week, 1)

    def to_date(self) -> datetime.date:
        return datetime.date.fromisocalendar(self.year, self.week, 1)

    def __add__(self, n: int) -> "Week":
        if not isinstance(n, int):
            return NotImplemented
        d = self.to_date() + datetime.timedelta(weeks=n)
        iso = d.isocalendar()
        return Week(iso[0], iso[1])

    def __sub__(self, n: int) -> "Week":
        if not isinstance(n, int):
            return NotImplemented
        return self.__add__(-n)

    def __lt__(self, other: "Week") -> bool:
        if not isinstance(other, Week):
            raise KeyVariantError(f"cannot compare week with {type(other).__name__}")
        return (self.year, self.week) < (other.year, other.week)

    def __str__(self) -> str:
        return f"{self.year:04d}W{self.week:02d}"

    @staticmethod
    def parse(text: str) -> "Week":
        year, _, week = text.partition("W")
        return Week(int(year), int(week))


# The discrete key domain: text, integer, decimal, date, or week.
KeyValue = Union[str, int, float, datetime.date, Week]

_VARIANT_RANK = {str: 0, int: 1, float: 2, datetime.date: 3, Week: 4}
_VARIANT_NAME = {str: "text", int: "integer", float: "decimal",
                 datetime.date: "date", Week: "week"}


def key_variant(v: KeyValue) -> str:
    """Variant name of a key value; rejects values outside the key domain."""
    t = type(v)
    if t is bool or t not in _VARIANT_RANK:
        raise KeyVariantError(f"value {v!r} is not a valid key value")
    return _VARIANT_NAME[t]


def key_sort_token(v: KeyValue):
    """Totally ordered token for deterministic cross-variant row ordering."""
    t = type(v)
    if t is bool or t not in _VARIANT_RANK:
        raise KeyVariantError(f"value {v!r} is not a valid key value")
    if t is Week:
        return (_VARIANT_RANK[t], (v.year, v.week))
    if t is datetime.date:
        return (_VARIANT_RANK[t], v.toordinal())
    return (_VARIANT_RANK[t], v)


def row_sort_token(key: tuple) -> tuple:
    return tuple(key_sort_token(v) for v in key)


def key_eq(a: KeyValue, b: KeyValue) -> bool:
    """Equality within one variant; comparing across variants is an error."""
    if type(a) is not type(b) or type(a) is bool:
        raise KeyVariantError(
            f"cannot compare {key_variant(a)} with {key_variant(b)}"
            if type(a) in _VARIANT_RANK and type(b) in _VARIANT_RANK
            else f"cannot compare {a!r} with {b!r}")
    return a == b


def key_lt(a: KeyValue, b: KeyValue) -> bool:
    """Total order within one variant; comparing across variants is an error."""
    if type(a) is not type(b) or type(a) is bool:
        raise KeyVariantError(f"cannot order {a!r} against {b!r}")
    if isinstance(a, Week):
        return (a.year, a.week) < (b.year, b.week)
    return a < b


def key_shift(v: KeyValue, delta: int) -> KeyValue:
    """Shift an integer, date, or week key by a constant; bijective per variant."""
    if type(v) is bool:
        raise KeyVariantError(f"value {v!r} is not shiftable")
    if isinstance(v, int):
        return v + delta
    if isinstance(v, Week):
        return v + delta
    if isinstance(v, datetime.date):
        return v + datetime.timedelta(days=delta)
    raise KeyVariantError(f"key variant {key_variant(v)} does not support shifting")


class VarKind(enum.Enum):
    ERROR = "error"
    NULL = "null"
    LLUN = "llun"

    @property
    def default_weight(self) -> float:
        return 1.0 if self is VarKind.ERROR else 0.0


@dataclass(frozen=True)
class Variable:
    """Catalog record for one symbolic variable."""

    id: int
    kind: VarKind
    label: Optional[str]
    weight: float


class VarCatalog:
    """Append-only allocator of session-global variables.

    Allocation order is deterministic for a fixed input: there is a single
    allocation stream, and concurrent users synchronize on the internal lock.
    """

    def __init__(self):
        self._vars: list[Variable] = []
        self._lock = threading.Lock()

    def fresh(self, kind: VarKind, label: Optional[str] = None,
              weight: Optional[float] = None) -> int:
        with self._lock:
            vid = len(self._vars)
            w = kind.default_weight if weight is None else float(weight)
            self._vars.append(Variable(vid, kind, label, w))
            return vid

    def __len__(self) -> int:
        return len(self._vars)

    def __getitem__(self, vid: int) -> Variable:
        return self._vars[vid]

    def __iter__(self) -> Iterator[Variable]:
        return iter(list(self._vars))

    def weight(self, vid: int) -> float:
        return self._vars[vid].weight

    def kind(self, vid: int) -> VarKind:
        return self._vars[vid].kind

    def label(self, vid: int) -> str:
        v = self._vars[vid]
        return v.label if v.label is not None else f"x{v.id}"


class LinExpr:
    """Sparse linear expression ``const + sum(coeff * var)``.

    Canonical form: no stored coefficient is zero.  The zero test is exact
    (``== 0.0``) so the structure of query results is deterministic; numeric
    tolerances apply only when solving or comparing solved values.
    Instances are immutable by convention: no method mutates ``self``.
    """

    __slots__ = ("const", "terms")

    def __init__(self, const: float = 0.0, terms: Optional[Mapping[int, float]] = None):
        self.const = float(const)
        if terms:
            self.terms = {v: float(c) for v, c in terms.items() if float(c) != 0.0}
        else:
            self.terms = {}

    @staticmethod
    def of_const(c: float) -> "LinExpr":
        return LinExpr(c)

    @staticmethod
    def of_var(vid: int, coeff: float = 1.0, const: float = 0.0) -> "LinExpr":
        return LinExpr(const, {vid: coeff})

    def is_constant(self) -> bool:
        return not self.terms

    def variables(self) -> set[int]:
        return set(self.terms)

    def add(self, other: "LinExpr") -> "LinExpr":
        out = LinExpr.__new__(LinExpr)
        out.const = self.const + other.const
        terms = dict(self.terms)
        for v, c in other.terms.items():
            s = terms.get(v, 0.0) + c
            if s == 0.0:
                terms.pop(v, None)
            else:
                terms[v] = s
        out.terms = terms
        return out

    def sub(self, other: "LinExpr") -> "LinExpr":
        out = LinExpr.__new__(LinExpr)
        out.const = self.const - other.const
        terms = dict(self.terms)
        for v, c in other.terms.items():
            s = terms.get(v, 0.0) - c
            if s == 0.0:
                terms.pop(v, None)
            else:
                terms[v] = s
        out.terms = terms
        return out

    def scale(self, alpha: float) -> "LinExpr":
        out = LinExpr.__new__(LinExpr)
        out.const = alpha * self.const
        out.terms = {}
        for v, c in self.terms.items():
            p = alpha * c
            if p != 0.0:
                out.terms[v] = p
        return out

    def eval(self, valuation: "Valuation") -> float:
        total = self.const
        for v, c in self.terms.items():
            total += c * valuation[v]
        return total

    def __add__(self, other):
        if isinstance(other, LinExpr):
            return self.add(other)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, LinExpr):
            return self.sub(other)
        return NotImplemented

    def __mul__(self, alpha):
        if isinstance(alpha, (int, float)):
            return self.scale(float(alpha))
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, LinExpr):
            return NotImplemented
        return self.const == other.const and self.terms == other.terms

    def __hash__(self):
        return hash((self.const, frozenset(self.terms.items())))

    def __repr__(self):
        parts = []
        if self.const != 0.0 or not self.terms:
            parts.append(format_real(self.const))
        for v in sorted(self.terms):
            parts.append(f"{format_real(self.terms[v])}*x{v}")
        return " + ".join(parts)

    def format(self, catalog: Optional[VarCatalog] = None) -> str:
        """Human-readable rendering, with catalog labels when available."""
        parts = []
        if self.const != 0.0 or not self.terms:
            parts.append(format_real(self.const))
        for v in sorted(self.terms):
            name = catalog.label(v) if catalog is not None else f"x{v}"
            parts.append(f"{format_real(self.terms[v])}*{name}")
        return " + ".join(parts)


def format_real(x: float) -> str:
    """Shortest exact decimal form; integers print without a trailing .0."""
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


ZERO = LinExpr(0.0)


@dataclass(frozen=True)
class Valuation:
    """Total assignment of reals to variables; unmapped variables are 0."""

    assignment: Mapping[int, float]

    def __getitem__(self, vid: int) -> float:
        return self.assignment.get(vid, 0.0)

    def extended(self, extra: Mapping[int, float]) -> "Valuation":
        merged = dict(self.assignment)
        merged.update(extra)
        return Valuation(merged)


@dataclass(frozen=True)
class Signature:
    """Finite map signature: key attributes determine value attributes."""

    key_attrs: tuple[str, ...]
    value_attrs: tuple[str, ...]

    def __post_init__(self):
        both = self.key_attrs + self.value_attrs
        if len(set(both)) != len(both):
            raise EngineError(f"attribute names must be unique and disjoint: {both}")

    @property
    def attrs(self) -> tuple[str, ...]:
        return self.key_attrs + self.value_attrs

    def key_index(self, attr: str) -> int:
        return self.key_attrs.index(attr)

    def value_index(self, attr: str) -> int:
        return self.value_attrs.index(attr)

    def __str__(self):
        return f"{{{', '.join(self.key_attrs)}}} |> {{{', '.join(self.value_attrs)}}}"


class STable:
    """Finite map from ground key tuples to tuples of linear expressions.

    Rows are stored sorted by key tuple, so iteration order is deterministic.
    The full key tuple is the map key, which enforces the key-to-value
    functional dependency by construction.
    """

    __slots__ = ("sig", "rows")

    def __init__(self, sig: Signature,
                 rows: Union[Mapping[tuple, tuple], Iterable[tuple]] = ()):
        self.sig = sig
        items = rows.items() if isinstance(rows, Mapping) else list(rows)
        checked = []
        for key, values in items:
            key = tuple(key)
            values = tuple(values)
            if len(key) != len(sig.key_attrs):
                raise EngineError(f"key arity {len(key)} != {len(sig.key_attrs)}")
            if len(values) != len(sig.value_attrs):
                raise EngineError(f"value arity {len(values)} != {len(sig.value_attrs)}")
            for v in key:
                key_variant(v)
            for e in values:
                if not isinstance(e, LinExpr):
                    raise EngineError(f"value cell {e!r} is not a linear expression")
            checked.append((key, values))
        checked.sort(key=lambda kv: row_sort_token(kv[0]))
        self.rows = dict(checked)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows.items())

    def __eq__(self, other):
        if not isinstance(other, STable):
            return NotImplemented
        return self.sig == other.sig and self.rows == other.rows

    __hash__ = None  # unhashable; tables compare by content

    def is_ground(self) -> bool:
        return all(e.is_constant() for _, vs in self for e in vs)

    def variables(self) -> set[int]:
        out: set[int] = set()
        for _, vs in self:
            for e in vs:
                out |= e.variables()
        return out

    def __repr__(self):
        return f"STable({self.sig}, {len(self.rows)} rows)"


@dataclass
class Instance:
    """Named collection of tables sharing one variable catalog.

    Variables are globally scoped: the same id appearing in two tables
    denotes the same unknown.
    """

    tables: dict[str, STable]
    catalog: VarCatalog

    def schema(self) -> dict[str, Signature]:
        return {name: t.sig for name, t in self.tables.items()}

    def with_tables(self, extra: Mapping[str, STable]) -> "Instance":
        merged = dict(self.tables)
        merged.update(extra)
        return Instance(merged, self.catalog)
