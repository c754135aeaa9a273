"""CSV ingestion: typed keys, uncertainty encoding policies, variable allocation.

Uncertain numeric observations v are encoded multiplicatively as ``v*(1+x)``
with a fresh unit-weight error variable x (or a bare x when v = 0), so the
squared-error cost scales with the magnitude of the reported value.  Empty
cells become fresh zero-weight null variables, or ``c*(1+x)`` around an
educated guess c when a guess policy is configured.  Key cells must parse and
be present in every row.
"""

from __future__ import annotations

import csv
import datetime
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Union

from .errors import (EmptyCellError, NullKeyError, NumberParseError,
                     SchemaMismatchError)
from .model import (Instance, KeyValue, LinExpr, STable, Signature, VarCatalog,
                    VarKind, Week)


class KeyType(enum.Enum):
    TEXT = "text"
    INTEGER = "int"
    DECIMAL = "decimal"
    DATE = "date"
    WEEK = "week"

    def parse_cell(self, text: str, line: int, column: str) -> KeyValue:
        try:
            if self is KeyType.TEXT:
                return text
            if self is KeyType.INTEGER:
                return int(text)
            if self is KeyType.DECIMAL:
                return float(text)
            if self is KeyType.DATE:
                return datetime.date.fromisoformat(text)
            return Week.parse(text)
        except ValueError:
            raise NumberParseError(line, column, text) from None


@dataclass(frozen=True)
class TableSchema:
    """Declared table: typed key fields and value field names."""

    name: str
    keys: tuple[tuple[str, KeyType], ...]
    values: tuple[str, ...]

    @property
    def signature(self) -> Signature:
        return Signature(tuple(k for k, _ in self.keys), self.values)


class PolicyKind(enum.Enum):
    EXACT = "exact"
    ERROR = "error"
    NULL = "null"
    GUESS = "guess"


@dataclass(frozen=True)
class EncodingPolicy:
    """Per-column encoding of observed cells into expressions.

    exact: values verbatim, empty cells are an error.
    error: value v becomes v*(1+x) (bare x when v=0); empty becomes a null var.
    null:  values verbatim; empty becomes a null variable.
    guess(c): values verbatim; empty becomes c*(1+x) around the guess c.
    """

    kind: PolicyKind
    guess_value: Optional[float] = None

    @staticmethod
    def exact() -> "EncodingPolicy":
        return EncodingPolicy(PolicyKind.EXACT)

    @staticmethod
    def error() -> "EncodingPolicy":
        return EncodingPolicy(PolicyKind.ERROR)

    @staticmethod
    def null() -> "EncodingPolicy":
        return EncodingPolicy(PolicyKind.NULL)

    @staticmethod
    def guess(c: float) -> "EncodingPolicy":
        return EncodingPolicy(PolicyKind.GUESS, float(c))

    def is_exact(self) -> bool:
        return self.kind is PolicyKind.EXACT

    def __str__(self):
        if self.kind is PolicyKind.GUESS:
            from .model import format_real
            return f"guess({format_real(self.guess_value)})"
        return self.kind.value


def encode_cell(text: str, policy: EncodingPolicy, catalog: VarCatalog,
                label: str, line: int, column: str) -> LinExpr:
    """Map one CSV cell to an expression under the column's policy."""
    empty = text == ""
    if empty:
        if policy.kind is PolicyKind.EXACT:
            raise EmptyCellError(
                f"row {line}, column {column!r}: empty cell in an exact column")
        if policy.kind is PolicyKind.GUESS:
            x = catalog.fresh(VarKind.ERROR, label)
            c = policy.guess_value
            return LinExpr(c, {x: c})
        return LinExpr.of_var(catalog.fresh(VarKind.NULL, label))
    try:
        v = float(text)
    except ValueError:
        raise NumberParseError(line, column, text) from None
    if policy.kind is PolicyKind.ERROR:
        x = catalog.fresh(VarKind.ERROR, label)
        if v == 0.0:
            return LinExpr.of_var(x)
        return LinExpr(v, {x: v})
    return LinExpr.of_const(v)


def load_csv(path: Union[str, Path],
             schema: TableSchema,
             policies: Optional[Mapping[str, EncodingPolicy]] = None,
             catalog: Optional[VarCatalog] = None) -> STable:
    """Load one table; header must carry exactly the declared attributes.

    Columns may appear in any order.  ``policies`` maps value column names to
    encoding policies; unlisted columns are exact.
    """
    if catalog is None:
        catalog = VarCatalog()
    policies = dict(policies or {})
    key_names = [k for k, _ in schema.keys]
    expected = set(key_names) | set(schema.values)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatchError(f"{path}: empty file, header required") \
                from None
        if set(header) != expected or len(header) != len(expected):
            raise SchemaMismatchError(
                f"{path}: header {header} does not match attributes "
                f"{sorted(expected)}")
        col = {name: header.index(name) for name in header}

        rows = {}
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise SchemaMismatchError(
                    f"{path}:{line_no}: expected {len(header)} fields, "
                    f"got {len(record)}")
            key = []
            for name, ktype in schema.keys:
                text = record[col[name]]
                if text == "":
                    raise NullKeyError(
                        f"{path}:{line_no}: key column {name!r} is empty")
                key.append(ktype.parse_cell(text, line_no, name))
            key = tuple(key)
            key_txt = ",".join(str(v) for v in key)
            cells = []
            for name in schema.values:
                policy = policies.get(name, EncodingPolicy.exact())
                label = f"{schema.name}({key_txt}).{name}"
                cells.append(encode_cell(record[col[name]], policy, catalog,
                                         label, line_no, name))
            if key in rows:
                raise SchemaMismatchError(
                    f"{path}:{line_no}: duplicate key {key_txt}")
            rows[key] = tuple(cells)

    return STable(schema.signature, rows)


def load_directory(directory: Union[str, Path],
                   schemas: Mapping[str, TableSchema],
                   policies: Mapping[tuple[str, str], EncodingPolicy],
                   catalog: VarCatalog) -> Instance:
    """Load ``<directory>/<table>.csv`` for every declared table."""
    directory = Path(directory)
    tables = {}
    for name, schema in schemas.items():
        per_column = {col: pol for (tab, col), pol in policies.items()
                      if tab == name}
        tables[name] = load_csv(directory / f"{name}.csv", schema,
                                per_column, catalog)
    return Instance(tables, catalog)
